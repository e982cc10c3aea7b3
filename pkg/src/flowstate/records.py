"""Domain records: sensor streams, labels, and the aligned dataset.

Motion samples arrive at ~50 Hz while speed readings and traffic-state
labels arrive at 1 Hz.  Alignment joins them by zero-order hold: each
motion sample carries the most recent speed and label at or before its
timestamp.  CSV is the interchange format throughout, with fixed headers
and repr-formatted floats so serialize/parse round-trips are bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterator

import numpy as np

from .errors import (
    EmptyStream,
    MalformedRow,
    NoReferenceBefore,
    NonFiniteValue,
    NonMonotonicTime,
    UnknownStateToken,
)

MOTION_HEADER = "t,ax,ay,az,gx,gy,gz"
SPEED_HEADER = "t,v"
LABEL_HEADER = "t,state"
ALIGNED_HEADER = "t,ax,ay,az,gx,gy,gz,v,state"


class TrafficState(IntEnum):
    """Traffic flow state; the numeric order encodes congestion severity.

    Ties elsewhere in the package break toward the higher (more
    congested) value.
    """

    FREE = 0
    STEADY = 1
    CONGESTED = 2

    @classmethod
    def from_token(cls, token: str) -> "TrafficState":
        key = token.strip().lower()
        if key not in _STATE_TOKENS:
            raise UnknownStateToken(f"unknown state token {token!r}")
        return _STATE_TOKENS[key]

    @property
    def token(self) -> str:
        return self.name.lower()


_STATE_TOKENS = {
    "free": TrafficState.FREE,
    "steady": TrafficState.STEADY,
    "congested": TrafficState.CONGESTED,
}


@dataclass(frozen=True)
class SensorSample:
    """One 50 Hz motion sample: accelerations in g, angular rates in rad/s."""

    t: float
    ax: float
    ay: float
    az: float
    gx: float
    gy: float
    gz: float


@dataclass(frozen=True)
class SpeedSample:
    t: float
    v: float


@dataclass(frozen=True)
class LabelSample:
    t: float
    state: TrafficState


@dataclass(frozen=True)
class AlignedRecord:
    """Motion sample joined with the held speed and label."""

    t: float
    ax: float
    ay: float
    az: float
    gx: float
    gy: float
    gz: float
    v: float
    state: TrafficState


@dataclass(frozen=True)
class DatasetMeta:
    source: str = ""
    sample_rate_hint: float | None = None


@dataclass(frozen=True)
class Dataset:
    """Column-oriented store of aligned records.

    Arrays are treated as immutable after construction; build instances
    through :meth:`from_arrays`, which validates the invariants (finite
    values, strictly increasing timestamps, non-negative speeds).
    """

    t: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    az: np.ndarray
    gx: np.ndarray
    gy: np.ndarray
    gz: np.ndarray
    v: np.ndarray
    state: np.ndarray
    meta: DatasetMeta = field(default_factory=DatasetMeta)

    @classmethod
    def from_arrays(cls, t, ax, ay, az, gx, gy, gz, v, state, meta=None) -> "Dataset":
        cols = [np.asarray(c, dtype=np.float64) for c in (t, ax, ay, az, gx, gy, gz, v)]
        state = np.asarray(state, dtype=np.int8)
        n = cols[0].shape[0]
        if n == 0:
            raise EmptyStream("dataset must contain at least one record")
        if any(c.shape != (n,) for c in cols) or state.shape != (n,):
            raise MalformedRow("dataset columns have inconsistent lengths")
        for name, c in zip("t ax ay az gx gy gz v".split(), cols):
            if not np.all(np.isfinite(c)):
                raise NonFiniteValue(f"column {name} contains a non-finite value")
        if np.any(np.diff(cols[0]) <= 0):
            raise NonMonotonicTime("timestamps must be strictly increasing")
        if np.any(cols[7] < 0):
            raise MalformedRow("speed must be non-negative")
        if np.any((state < 0) | (state > 2)):
            raise UnknownStateToken("state codes must be 0, 1, or 2")
        return cls(*cols, state, meta or DatasetMeta())

    def __len__(self) -> int:
        return self.t.shape[0]

    def record(self, i: int) -> AlignedRecord:
        return AlignedRecord(
            float(self.t[i]), float(self.ax[i]), float(self.ay[i]), float(self.az[i]),
            float(self.gx[i]), float(self.gy[i]), float(self.gz[i]), float(self.v[i]),
            TrafficState(int(self.state[i])),
        )

    def __iter__(self) -> Iterator[AlignedRecord]:
        return (self.record(i) for i in range(len(self)))

    def channel(self, name: str) -> np.ndarray:
        """Column by channel name; ``speed`` maps to the held speed."""
        if name == "speed":
            return self.v
        try:
            return getattr(self, name)
        except AttributeError:
            raise KeyError(name) from None


def _rows(text: str, header: str, n_fields: int):
    """Yield (line_number, fields) for each data row after a validated header."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != header:
        raise MalformedRow(f"expected header {header!r}", line=1)
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        fields = raw.split(",")
        if len(fields) != n_fields:
            raise MalformedRow(
                f"expected {n_fields} fields, got {len(fields)}", line=lineno
            )
        yield lineno, fields


def _parse_float(token: str, lineno: int) -> float:
    try:
        x = float(token)
    except ValueError:
        raise MalformedRow(f"non-numeric field {token!r}", line=lineno) from None
    if not math.isfinite(x):
        raise NonFiniteValue(f"non-finite value {token!r}", line=lineno)
    return x


def parse_motion_csv(text: str) -> list[SensorSample]:
    """Parse a ``t,ax,ay,az,gx,gy,gz`` stream, order preserved."""
    out: list[SensorSample] = []
    prev_t = None
    for lineno, fields in _rows(text, MOTION_HEADER, 7):
        vals = [_parse_float(f, lineno) for f in fields]
        if prev_t is not None and vals[0] <= prev_t:
            raise NonMonotonicTime(
                f"t={vals[0]!r} not greater than previous t={prev_t!r}", line=lineno
            )
        prev_t = vals[0]
        out.append(SensorSample(*vals))
    return out


def parse_speed_csv(text: str) -> list[SpeedSample]:
    out: list[SpeedSample] = []
    prev_t = None
    for lineno, fields in _rows(text, SPEED_HEADER, 2):
        t = _parse_float(fields[0], lineno)
        v = _parse_float(fields[1], lineno)
        if v < 0:
            raise MalformedRow(f"negative speed {v!r}", line=lineno)
        if prev_t is not None and t <= prev_t:
            raise NonMonotonicTime(
                f"t={t!r} not greater than previous t={prev_t!r}", line=lineno
            )
        prev_t = t
        out.append(SpeedSample(t, v))
    return out


def parse_label_csv(text: str) -> list[LabelSample]:
    out: list[LabelSample] = []
    prev_t = None
    for lineno, fields in _rows(text, LABEL_HEADER, 2):
        t = _parse_float(fields[0], lineno)
        try:
            state = TrafficState.from_token(fields[1])
        except UnknownStateToken as exc:
            raise UnknownStateToken(str(exc), line=lineno) from None
        if prev_t is not None and t <= prev_t:
            raise NonMonotonicTime(
                f"t={t!r} not greater than previous t={prev_t!r}", line=lineno
            )
        prev_t = t
        out.append(LabelSample(t, state))
    return out


def align_streams(
    motion: list[SensorSample],
    speed: list[SpeedSample],
    labels: list[LabelSample],
    drop_leading: bool = False,
) -> Dataset:
    """Join streams by zero-order hold.

    Each motion sample takes the most recent speed and label at or
    before its timestamp.  Motion samples preceding the first speed or
    label sample are an error unless ``drop_leading`` is set, in which
    case they are dropped.
    """
    if not motion or not speed or not labels:
        raise EmptyStream("align_streams requires non-empty motion, speed, and labels")
    t_m = np.array([s.t for s in motion])
    t_v = np.array([s.t for s in speed])
    t_l = np.array([s.t for s in labels])
    iv = np.searchsorted(t_v, t_m, side="right") - 1
    il = np.searchsorted(t_l, t_m, side="right") - 1
    missing = (iv < 0) | (il < 0)
    if np.any(missing):
        if not drop_leading:
            raise NoReferenceBefore(float(t_m[missing][0]))
        keep = ~missing
        motion = [m for m, k in zip(motion, keep) if k]
        if not motion:
            raise EmptyStream("all motion samples precede the reference streams")
        t_m, iv, il = t_m[keep], iv[keep], il[keep]
    v_arr = np.array([s.v for s in speed])[iv]
    state_arr = np.array([int(s.state) for s in labels], dtype=np.int8)[il]
    return Dataset.from_arrays(
        t_m,
        [m.ax for m in motion], [m.ay for m in motion], [m.az for m in motion],
        [m.gx for m in motion], [m.gy for m in motion], [m.gz for m in motion],
        v_arr, state_arr,
        meta=DatasetMeta(source="aligned"),
    )


def class_distribution(ds: Dataset) -> dict[TrafficState, float]:
    """Fraction of records in each state; fractions sum to 1."""
    if len(ds) == 0:
        raise EmptyStream("class_distribution requires a non-empty dataset")
    counts = np.bincount(ds.state, minlength=3)
    return {TrafficState(i): counts[i] / len(ds) for i in range(3)}


def _fmt(x: float) -> str:
    # repr gives the shortest string that parses back to the same float
    return repr(float(x))


def write_aligned_csv(ds: Dataset) -> str:
    lines = [ALIGNED_HEADER]
    for i in range(len(ds)):
        lines.append(
            ",".join(
                [_fmt(ds.t[i]), _fmt(ds.ax[i]), _fmt(ds.ay[i]), _fmt(ds.az[i]),
                 _fmt(ds.gx[i]), _fmt(ds.gy[i]), _fmt(ds.gz[i]), _fmt(ds.v[i]),
                 TrafficState(int(ds.state[i])).token]
            )
        )
    return "\n".join(lines) + "\n"


def parse_aligned_csv(text: str, meta: DatasetMeta | None = None) -> Dataset:
    t = []
    chans: list[list[float]] = [[] for _ in range(7)]
    states = []
    prev_t = None
    for lineno, fields in _rows(text, ALIGNED_HEADER, 9):
        vals = [_parse_float(f, lineno) for f in fields[:8]]
        try:
            state = TrafficState.from_token(fields[8])
        except UnknownStateToken as exc:
            raise UnknownStateToken(str(exc), line=lineno) from None
        if prev_t is not None and vals[0] <= prev_t:
            raise NonMonotonicTime(
                f"t={vals[0]!r} not greater than previous t={prev_t!r}", line=lineno
            )
        prev_t = vals[0]
        t.append(vals[0])
        for j in range(6):
            chans[j].append(vals[1 + j])
        chans[6].append(vals[7])
        states.append(int(state))
    if not t:
        raise EmptyStream("aligned stream contains no data rows")
    return Dataset.from_arrays(
        t, chans[0], chans[1], chans[2], chans[3], chans[4], chans[5], chans[6],
        states, meta=meta or DatasetMeta(source="aligned.csv"),
    )


def write_motion_csv(samples: list[SensorSample]) -> str:
    lines = [MOTION_HEADER]
    for s in samples:
        lines.append(",".join(_fmt(x) for x in (s.t, s.ax, s.ay, s.az, s.gx, s.gy, s.gz)))
    return "\n".join(lines) + "\n"


def write_speed_csv(samples: list[SpeedSample]) -> str:
    lines = [SPEED_HEADER]
    lines += [f"{_fmt(s.t)},{_fmt(s.v)}" for s in samples]
    return "\n".join(lines) + "\n"


def write_label_csv(samples: list[LabelSample]) -> str:
    lines = [LABEL_HEADER]
    lines += [f"{_fmt(s.t)},{s.state.token}" for s in samples]
    return "\n".join(lines) + "\n"
