"""Two-stage windowed features.

Stage 1 slides a window of ``n1`` samples (step ``m1``) over the raw
channels and computes dispersion/location statistics per window.  Stage 2
slides a window of ``n2`` stage-1 rows (step ``m2``) and, for each row of
the threshold table, counts how many stage-1 values strictly exceed the
row's threshold.  Dividing each count by ``n2`` normalizes every feature
into [0, 1] without any dataset-dependent statistics, so train/test
leakage through normalization is impossible.

Each output vector is labeled by majority vote over the raw samples it
spans, with ties broken toward the more congested state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    InvalidConfig,
    MissingColumn,
    NoSpeedRows,
    TooFewSamples,
    TooFewWindows,
    ZeroMean,
    ZeroVariance,
)
from .records import Dataset, TrafficState


class FeatureKind(Enum):
    RANGE = "range"
    STD_DEV = "std_dev"
    MEAN = "mean"
    QUARTILE = "quartile"
    VARIANCE = "variance"
    MEAN_ABS_DEV = "mean_abs_dev"
    SKEWNESS = "skewness"
    KURTOSIS = "kurtosis"
    COEFF_VAR = "coeff_var"


class Channel(Enum):
    AX = "ax"
    AY = "ay"
    AZ = "az"
    GX = "gx"
    GY = "gy"
    GZ = "gz"
    SPEED = "speed"


@dataclass(frozen=True)
class ThresholdRow:
    index: int
    kind: FeatureKind
    channel: Channel
    threshold: float
    unit: str = ""


@dataclass(frozen=True)
class ThresholdTable:
    rows: tuple[ThresholdRow, ...]

    def __post_init__(self):
        for i, row in enumerate(self.rows, start=1):
            if row.index != i:
                raise InvalidConfig("rows", f"indices must be contiguous from 1, got {row.index} at position {i}")
        triples = [(r.kind, r.channel, r.threshold) for r in self.rows]
        if len(set(triples)) != len(triples):
            raise InvalidConfig("rows", "duplicate (kind, channel, threshold) triple")

    def __len__(self) -> int:
        return len(self.rows)

    def pairs(self) -> list[tuple[FeatureKind, Channel]]:
        """Distinct (kind, channel) pairs in first-appearance order."""
        seen: list[tuple[FeatureKind, Channel]] = []
        for r in self.rows:
            if (r.kind, r.channel) not in seen:
                seen.append((r.kind, r.channel))
        return seen

    def speed_row_positions(self) -> list[int]:
        return [i for i, r in enumerate(self.rows) if r.channel is Channel.SPEED]

    def to_json(self) -> str:
        payload = {
            "rows": [
                {
                    "index": r.index,
                    "kind": r.kind.value,
                    "channel": r.channel.value,
                    "threshold": r.threshold,
                    "unit": r.unit,
                }
                for r in self.rows
            ]
        }
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ThresholdTable":
        try:
            payload = json.loads(text)
            rows = tuple(
                ThresholdRow(
                    index=int(r["index"]),
                    kind=FeatureKind(r["kind"]),
                    channel=Channel(r["channel"]),
                    threshold=float(r["threshold"]),
                    unit=str(r.get("unit", "")),
                )
                for r in payload["rows"]
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig("thresholds", f"malformed threshold table: {exc}") from None
        return cls(rows)


def _t1(i, kind, channel, threshold, unit):
    return ThresholdRow(i, kind, channel, threshold, unit)


#: Shipped default table: 23 thresholded statistics over the motion and
#: speed channels.  The quartile rows are interquartile ranges (a
#: dispersion measure, like every other acceleration row in the table).
DEFAULT_TABLE = ThresholdTable(
    (
        _t1(1, FeatureKind.STD_DEV, Channel.AX, 0.41, "g"),
        _t1(2, FeatureKind.MEAN, Channel.SPEED, 0.9, "m/s"),
        _t1(3, FeatureKind.QUARTILE, Channel.AX, 0.41, "g"),
        _t1(4, FeatureKind.QUARTILE, Channel.AZ, 0.51, "g"),
        _t1(5, FeatureKind.VARIANCE, Channel.AZ, 0.2, "g^2"),
        _t1(6, FeatureKind.MEAN_ABS_DEV, Channel.AX, 0.4, "g"),
        _t1(7, FeatureKind.MEAN_ABS_DEV, Channel.GX, 0.25, "rad/s"),
        _t1(8, FeatureKind.COEFF_VAR, Channel.AZ, 0.5, ""),
        _t1(9, FeatureKind.RANGE, Channel.AX, 0.2, "g"),
        _t1(10, FeatureKind.RANGE, Channel.AZ, 0.2, "g"),
        _t1(11, FeatureKind.STD_DEV, Channel.AX, 0.3, "g"),
        _t1(12, FeatureKind.STD_DEV, Channel.AZ, 0.2, "g"),
        _t1(13, FeatureKind.STD_DEV, Channel.GX, 0.1, "rad/s"),
        _t1(14, FeatureKind.STD_DEV, Channel.GY, 0.15, "rad/s"),
        _t1(15, FeatureKind.MEAN, Channel.SPEED, 0.4, "m/s"),
        _t1(16, FeatureKind.QUARTILE, Channel.AX, 0.18, "g"),
        _t1(17, FeatureKind.QUARTILE, Channel.AZ, 0.26, "g"),
        _t1(18, FeatureKind.VARIANCE, Channel.AX, 0.08, "g^2"),
        _t1(19, FeatureKind.VARIANCE, Channel.AZ, 0.06, "g^2"),
        _t1(20, FeatureKind.MEAN_ABS_DEV, Channel.AX, 0.26, "g"),
        _t1(21, FeatureKind.MEAN_ABS_DEV, Channel.AZ, 0.25, "g"),
        _t1(22, FeatureKind.MEAN_ABS_DEV, Channel.GX, 0.2, "rad/s"),
        _t1(23, FeatureKind.COEFF_VAR, Channel.AZ, 0.22, ""),
    )
)


@dataclass(frozen=True)
class Stage1Config:
    n1: int
    m1: int

    def __post_init__(self):
        if self.n1 < 2:
            raise InvalidConfig("n1", f"window length must be >= 2, got {self.n1}")
        if self.m1 < 1:
            raise InvalidConfig("m1", f"step must be >= 1, got {self.m1}")


@dataclass(frozen=True)
class Stage2Config:
    n2: int
    m2: int
    table: ThresholdTable = DEFAULT_TABLE

    def __post_init__(self):
        if self.n2 < 1:
            raise InvalidConfig("n2", f"window length must be >= 1, got {self.n2}")
        if self.m2 < 1:
            raise InvalidConfig("m2", f"step must be >= 1, got {self.m2}")


@dataclass(frozen=True)
class FeatureVector:
    """Normalized exceedance counts plus the majority label and raw span."""

    values: np.ndarray
    label: TrafficState
    span: tuple[int, int]


@dataclass(frozen=True)
class Stage1Matrix:
    """Per-window statistics plus what stage 2 needs for labeling.

    ``values[k, p]`` is statistic ``pairs[p]`` over window ``k``;
    ``spans[k]`` is the raw half-open index range the window covers.
    ``state_cum[i, s]`` counts raw samples with state ``s`` before index
    ``i``, so any raw span's label tally is one subtraction.
    """

    values: np.ndarray
    pairs: tuple[tuple[FeatureKind, Channel], ...]
    spans: np.ndarray
    state_cum: np.ndarray

    @property
    def n_windows(self) -> int:
        return self.values.shape[0]

    def label_counts(self, lo: int, hi: int) -> np.ndarray:
        return self.state_cum[hi] - self.state_cum[lo]


def _quantile_sorted(s: np.ndarray, q: float):
    """Linear-interpolation quantile of pre-sorted data along the last axis."""
    n = s.shape[-1]
    h = q * (n - 1)
    lo = int(np.floor(h))
    frac = h - lo
    if lo + 1 >= n:
        return s[..., lo]
    return s[..., lo] + frac * (s[..., lo + 1] - s[..., lo])


def _stat_along_rows(kind: FeatureKind, w: np.ndarray) -> np.ndarray:
    """One statistic per row of ``w``; rows are windows.

    Central moments are computed on the first-sample-shifted window
    (x - x[0]), which leaves them unchanged mathematically but makes a
    constant window exactly degenerate instead of epsilon-noisy.
    """
    if kind is FeatureKind.RANGE:
        return np.max(w, axis=-1) - np.min(w, axis=-1)
    if kind is FeatureKind.MEAN:
        return np.mean(w, axis=-1)
    if kind is FeatureKind.QUARTILE:
        s = np.sort(w, axis=-1)
        return _quantile_sorted(s, 0.75) - _quantile_sorted(s, 0.25)
    shifted = w - w[..., :1]
    d = shifted - np.mean(shifted, axis=-1)[..., None]
    if kind is FeatureKind.MEAN_ABS_DEV:
        return np.mean(np.abs(d), axis=-1)
    m2 = np.mean(d * d, axis=-1)
    if kind is FeatureKind.VARIANCE:
        return m2
    if kind is FeatureKind.STD_DEV:
        return np.sqrt(m2)
    if kind is FeatureKind.COEFF_VAR:
        m = np.mean(w, axis=-1)
        if np.any(m == 0):
            raise ZeroMean("coefficient of variation of zero-mean data")
        return np.sqrt(m2) / np.abs(m)
    if np.any(m2 == 0):
        raise ZeroVariance(f"{kind.value} of constant data")
    if kind is FeatureKind.SKEWNESS:
        m3 = np.mean(d * d * d, axis=-1)
        return m3 / (m2 * np.sqrt(m2))
    if kind is FeatureKind.KURTOSIS:
        m4 = np.mean(d * d * d * d, axis=-1)
        return m4 / (m2 * m2)
    raise ValueError(f"unhandled feature kind {kind}")


def stat_feature(kind: FeatureKind, xs, quartile_mode: str = "iqr") -> float:
    """One windowed statistic of ``xs``.

    Population (1/N) moments throughout; standard deviation is the square
    root of the population variance, kurtosis is non-excess, and the
    coefficient of variation divides by ``abs(mean)``.  Constant data
    yields exactly zero dispersion.  ``quartile_mode`` selects the
    dispersion reading ``"iqr"`` (default) or the upper quartile ``"q3"``.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 1 or xs.shape[0] < 2:
        raise TooFewSamples(f"need at least 2 samples, got shape {xs.shape}")
    if kind is FeatureKind.QUARTILE and quartile_mode == "q3":
        return float(_quantile_sorted(np.sort(xs), 0.75))
    return float(_stat_along_rows(kind, xs[None, :])[0])


def _window_view(x: np.ndarray, n: int, step: int) -> np.ndarray:
    return np.lib.stride_tricks.sliding_window_view(x, n)[::step]


def stage1(
    ds: Dataset,
    cfg: Stage1Config,
    needed: list[tuple[FeatureKind, Channel]],
) -> Stage1Matrix:
    """Windowed statistics for each requested (kind, channel) pair.

    Window ``k`` covers raw samples ``[k*m1, k*m1 + n1)``; there are
    ``(len(ds) - n1) // m1 + 1`` windows.
    """
    n = len(ds)
    if n < cfg.n1:
        raise TooFewSamples(f"{n} samples, window needs {cfg.n1}")
    pairs = tuple(needed)
    n_windows = (n - cfg.n1) // cfg.m1 + 1
    values = np.empty((n_windows, len(pairs)))
    views: dict[Channel, np.ndarray] = {}
    for p, (kind, channel) in enumerate(pairs):
        if channel not in views:
            views[channel] = _window_view(ds.channel(channel.value), cfg.n1, cfg.m1)
        values[:, p] = _stat_along_rows(kind, views[channel])
    starts = np.arange(n_windows) * cfg.m1
    spans = np.column_stack([starts, starts + cfg.n1])
    state_cum = np.zeros((n + 1, 3), dtype=np.int64)
    for s in range(3):
        np.cumsum(ds.state == s, out=state_cum[1:, s])
    return Stage1Matrix(values, pairs, spans, state_cum)


def all_pairs() -> list[tuple[FeatureKind, Channel]]:
    """Every (kind, channel) combination, for exploratory stage-1 runs."""
    return [(k, c) for k in FeatureKind for c in Channel]


def _majority_state(counts: np.ndarray) -> TrafficState:
    # ties break toward the more congested state
    best = counts.max()
    return TrafficState(int(np.flatnonzero(counts == best)[-1]))


def stage2(m: Stage1Matrix, cfg: Stage2Config) -> list[FeatureVector]:
    """Normalized threshold-exceedance counts over stage-1 windows."""
    if m.n_windows < cfg.n2:
        raise TooFewWindows(f"{m.n_windows} stage-1 rows, window needs {cfg.n2}")
    col_of: dict[tuple[FeatureKind, Channel], int] = {
        pair: i for i, pair in enumerate(m.pairs)
    }
    cols = []
    for row in cfg.table.rows:
        key = (row.kind, row.channel)
        if key not in col_of:
            raise MissingColumn(f"stage-1 matrix lacks ({row.kind.value}, {row.channel.value})")
        cols.append(col_of[key])
    n_vectors = (m.n_windows - cfg.n2) // cfg.m2 + 1
    thresholds = np.array([row.threshold for row in cfg.table.rows])
    exceed = m.values[:, cols] > thresholds  # (windows, table rows)
    counts = np.empty((n_vectors, len(cfg.table)), dtype=np.int64)
    for j in range(len(cfg.table)):
        counts[:, j] = np.sum(
            np.lib.stride_tricks.sliding_window_view(exceed[:, j], cfg.n2)[:: cfg.m2],
            axis=1,
        )
    out: list[FeatureVector] = []
    for k in range(n_vectors):
        first = k * cfg.m2
        lo = int(m.spans[first, 0])
        hi = int(m.spans[first + cfg.n2 - 1, 1])
        label = _majority_state(m.label_counts(lo, hi))
        out.append(FeatureVector(counts[k] / cfg.n2, label, (lo, hi)))
    return out


def featurize(ds: Dataset, s1: Stage1Config, s2: Stage2Config) -> list[FeatureVector]:
    """Compose the two stages over the pairs the threshold table demands."""
    return stage2(stage1(ds, s1, s2.table.pairs()), s2)


def speed_only_projection(vec: FeatureVector, table: ThresholdTable = DEFAULT_TABLE) -> FeatureVector:
    """Restrict a vector to the table's speed-channel rows."""
    pos = table.speed_row_positions()
    if not pos:
        raise NoSpeedRows("threshold table has no speed rows")
    if len(vec.values) == len(pos):
        # already projected; projection is idempotent
        return vec
    return FeatureVector(vec.values[pos].copy(), vec.label, vec.span)


def effective_span(s1: Stage1Config, s2: Stage2Config) -> int:
    """Raw samples covered by one output vector: (n2 - 1) * m1 + n1."""
    return (s2.n2 - 1) * s1.m1 + s1.n1


def features_header(n_features: int) -> str:
    return ",".join([f"f{i}" for i in range(1, n_features + 1)] + ["label", "span_lo", "span_hi"])


def write_features_csv(vectors: list[FeatureVector]) -> str:
    if not vectors:
        raise TooFewWindows("no feature vectors to write")
    lines = [features_header(len(vectors[0].values))]
    for v in vectors:
        parts = [repr(float(x)) for x in v.values]
        parts += [v.label.token, str(v.span[0]), str(v.span[1])]
        lines.append(",".join(parts))
    return "\n".join(lines) + "\n"


def parse_features_csv(text: str) -> list[FeatureVector]:
    from .errors import MalformedRow
    from .records import _parse_float  # shared numeric-field handling

    lines = text.splitlines()
    if not lines:
        raise MalformedRow("empty features file", line=1)
    header = lines[0].strip().split(",")
    if header[-3:] != ["label", "span_lo", "span_hi"] or len(header) < 4:
        raise MalformedRow("expected header f1..fK,label,span_lo,span_hi", line=1)
    n_features = len(header) - 3
    out = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        fields = raw.split(",")
        if len(fields) != n_features + 3:
            raise MalformedRow(f"expected {n_features + 3} fields, got {len(fields)}", line=lineno)
        values = np.array([_parse_float(f, lineno) for f in fields[:n_features]])
        label = TrafficState.from_token(fields[n_features])
        span = (int(fields[n_features + 1]), int(fields[n_features + 2]))
        out.append(FeatureVector(values, label, span))
    return out


def as_xy(vectors: list[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    """Stack vectors into a value matrix and a label-code array."""
    X = np.stack([v.values for v in vectors])
    y = np.array([int(v.label) for v in vectors], dtype=np.int64)
    return X, y
