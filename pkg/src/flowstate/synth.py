"""Seeded synthetic generator for labeled motion and speed streams.

The signal model mimics a phone lying flat in a moving car: the z
accelerometer rests near -1 g and every other motion channel fluctuates
around zero with state-dependent amplitude, plus occasional brake/turn
bursts (short half-sine transients).  Speed is a per-second AR(1)
deviation around a per-state mean, clamped at zero.  The label path is a
per-second Markov chain whose transition matrix is built to have a
requested stationary class mix.

All randomness flows from counter-based streams keyed by the config
seed, so identical configs produce byte-identical datasets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidConfig
from .records import Dataset, DatasetMeta, TrafficState
from .rng import stream

#: Class shares the shipped presets are calibrated to (free, steady, congested).
DEFAULT_TARGET_MIX = (0.4515, 0.3004, 0.2481)

# independent stream purposes
_STATES, _SPEED, _MOTION, _EVENTS = range(4)

# per-channel scale relative to the regime amplitudes
_ACCEL_SCALE = {"ax": 1.0, "ay": 0.6, "az": 0.8}
_GYRO_SCALE = {"gx": 1.0, "gy": 0.7, "gz": 0.6}

_SPEED_AR = 0.9  # per-second correlation of the speed deviation

# Interaction signature used by the nonlinear preset: the ax and gx
# amplitudes jump between hi/lo multipliers driven by a hidden bit that
# flips every _LATENT_BLOCK_S seconds of the current state's own
# occupancy (so the bit is balanced within every class by construction).
# Congested pairs the two channels (hi,hi)/(lo,lo) while free opposes
# them (hi,lo)/(lo,hi): the classes share every single-channel marginal
# and differ only in the channel interaction.
_LATENT_BLOCK_S = 90
_AX_HI, _AX_LO = 1.85, 0.15
_GX_HI, _GX_LO = 1.9, 0.1
_NONLINEAR_AZ_SIGMA = {0: 0.10, 1: 0.35, 2: 0.10}
_NONLINEAR_GY_SIGMA = 0.10


@dataclass(frozen=True)
class StateRegime:
    """Per-state signal parameters."""

    speed_mean: float
    speed_jitter: float
    accel_amplitude: float
    gyro_amplitude: float
    event_rate: float

    def validate(self, name: str):
        for fname in ("speed_mean", "speed_jitter", "accel_amplitude", "gyro_amplitude", "event_rate"):
            if getattr(self, fname) < 0:
                raise InvalidConfig(f"regimes[{name}].{fname}", "must be non-negative")


@dataclass(frozen=True)
class GenConfig:
    seed: int
    duration: float
    sample_rate: float = 50.0
    regimes: dict[TrafficState, StateRegime] = field(default_factory=dict)
    transition: np.ndarray | None = None
    target_mix: tuple[float, float, float] | None = None
    nonlinear_preset: bool = False

    def validate(self):
        if self.duration <= 0:
            raise InvalidConfig("duration", f"must be > 0, got {self.duration}")
        if self.sample_rate <= 0:
            raise InvalidConfig("sample_rate", f"must be > 0, got {self.sample_rate}")
        if set(self.regimes) != set(TrafficState):
            raise InvalidConfig("regimes", "must define all three states")
        for state, regime in self.regimes.items():
            regime.validate(state.token)
        t = np.asarray(self.transition, dtype=np.float64)
        if t.shape != (3, 3) or np.any(t < 0):
            raise InvalidConfig("transition", "must be a non-negative 3x3 matrix")
        if np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-12):
            raise InvalidConfig("transition", "rows must sum to 1 within 1e-12")


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix."""
    t = np.asarray(transition, dtype=np.float64)
    # solve pi (T - I) = 0 with sum(pi) = 1
    a = np.vstack([t.T - np.eye(3), np.ones(3)])
    b = np.array([0.0, 0.0, 0.0, 1.0])
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    return pi / pi.sum()


def transition_for_mix(mix, switch_rate: float) -> np.ndarray:
    """Row-stochastic matrix with stationary distribution ``mix``.

    Each second the chain stays put with probability ``1 - switch_rate``
    and otherwise redraws the state from ``mix``, which leaves ``mix``
    stationary for any switch rate in (0, 1].
    """
    pi = np.asarray(mix, dtype=np.float64)
    if pi.shape != (3,) or np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-9:
        raise InvalidConfig("target_mix", "must be three positive fractions summing to 1")
    if not 0 < switch_rate <= 1:
        raise InvalidConfig("switch_rate", "must be in (0, 1]")
    return (1 - switch_rate) * np.eye(3) + switch_rate * np.tile(pi, (3, 1))


def default_presets() -> dict[str, GenConfig]:
    """Shipped generator presets.

    ``paperlike`` orders the regimes so acceleration amplitude and speed
    both fall from free to congested flow; the class signal lives mostly
    in the motion channels.  ``nonlinear`` hides the free/congested
    distinction in an interaction between the ax and gx amplitudes so
    linear and naive-Bayes baselines underperform a deep classifier.
    """
    paperlike = GenConfig(
        seed=0,
        duration=3600.0,
        regimes={
            TrafficState.FREE: StateRegime(16.0, 2.0, 0.45, 0.28, 0.06),
            TrafficState.STEADY: StateRegime(8.0, 1.5, 0.22, 0.12, 0.10),
            TrafficState.CONGESTED: StateRegime(2.0, 1.0, 0.07, 0.04, 0.15),
        },
        transition=transition_for_mix(DEFAULT_TARGET_MIX, 0.009),
        target_mix=DEFAULT_TARGET_MIX,
    )
    nonlinear = GenConfig(
        seed=0,
        duration=3600.0,
        regimes={
            TrafficState.FREE: StateRegime(8.0, 1.2, 0.33, 0.21, 0.0),
            TrafficState.STEADY: StateRegime(8.0, 1.2, 0.22, 0.12, 0.0),
            TrafficState.CONGESTED: StateRegime(8.0, 1.2, 0.32, 0.20, 0.0),
        },
        transition=transition_for_mix(DEFAULT_TARGET_MIX, 0.009),
        target_mix=DEFAULT_TARGET_MIX,
        nonlinear_preset=True,
    )
    return {"paperlike": paperlike, "nonlinear": nonlinear}


def _state_path(cfg: GenConfig, n_seconds: int) -> np.ndarray:
    rng = stream(cfg.seed, _STATES)
    t = np.asarray(cfg.transition, dtype=np.float64)
    pi = stationary_distribution(t)
    states = np.empty(n_seconds, dtype=np.int8)
    states[0] = rng.choice(3, p=pi)
    for k in range(1, n_seconds):
        states[k] = rng.choice(3, p=t[states[k - 1]])
    return states


def _speed_path(cfg: GenConfig, states: np.ndarray) -> np.ndarray:
    rng = stream(cfg.seed, _SPEED)
    means = np.array([cfg.regimes[TrafficState(s)].speed_mean for s in range(3)])
    jitters = np.array([cfg.regimes[TrafficState(s)].speed_jitter for s in range(3)])
    eps = rng.standard_normal(states.shape[0])
    scale = math.sqrt(1 - _SPEED_AR**2)
    e = np.empty(states.shape[0])
    e[0] = jitters[states[0]] * eps[0]
    for k in range(1, states.shape[0]):
        e[k] = _SPEED_AR * e[k - 1] + scale * jitters[states[k]] * eps[k]
    return np.maximum(0.0, means[states] + e)


def _per_second_sigmas(cfg: GenConfig, states: np.ndarray) -> dict[str, np.ndarray]:
    """Noise scale per channel per second, including the nonlinear signature."""
    accel = np.array([cfg.regimes[TrafficState(s)].accel_amplitude for s in range(3)])
    gyro = np.array([cfg.regimes[TrafficState(s)].gyro_amplitude for s in range(3)])
    sig = {ch: scale * accel[states] for ch, scale in _ACCEL_SCALE.items()}
    sig.update({ch: scale * gyro[states] for ch, scale in _GYRO_SCALE.items()})
    if not cfg.nonlinear_preset:
        return sig
    n_seconds = states.shape[0]
    free = states == int(TrafficState.FREE)
    cong = states == int(TrafficState.CONGESTED)
    u = np.zeros(n_seconds, dtype=bool)
    for mask in (free, cong):
        occupancy = np.arange(int(mask.sum()))
        u[mask] = (occupancy // _LATENT_BLOCK_S) % 2 == 1
    ax_mult = np.ones(n_seconds)
    gx_mult = np.ones(n_seconds)
    ax_mult[free] = np.where(u[free], _AX_HI, _AX_LO)
    gx_mult[free] = np.where(u[free], _GX_LO, _GX_HI)
    ax_mult[cong] = np.where(u[cong], _AX_HI, _AX_LO)
    gx_mult[cong] = np.where(u[cong], _GX_HI, _GX_LO)
    sig["ax"] = sig["ax"] * ax_mult
    sig["gx"] = sig["gx"] * gx_mult
    sig["az"] = np.array([_NONLINEAR_AZ_SIGMA[int(s)] for s in states])
    sig["gy"] = np.full(n_seconds, _NONLINEAR_GY_SIGMA)
    return sig


def _add_events(cfg, channels, sigmas, states, sec_idx, rate):
    """Add brake/turn bursts: half-sine pulses scaled by the second's sigma."""
    rng = stream(cfg.seed, _EVENTS)
    n_seconds = states.shape[0]
    n = sec_idx.shape[0]
    rates = np.array([cfg.regimes[TrafficState(s)].event_rate for s in range(3)])
    occur = rng.random(n_seconds) < rates[states]
    offsets = rng.random(n_seconds)
    durations = rng.uniform(0.3, 0.9, n_seconds)
    mults = rng.uniform(3.0, 7.0, n_seconds)
    signs = rng.integers(0, 2, size=(n_seconds, 3)) * 2 - 1
    for k in np.flatnonzero(occur):
        i0 = int((k + offsets[k]) * rate)
        length = max(2, int(durations[k] * rate))
        if i0 >= n:
            continue
        stop = min(i0 + length, n)
        pulse = np.sin(np.linspace(0.0, np.pi, length))[: stop - i0]
        channels["ax"][i0:stop] += signs[k, 0] * mults[k] * sigmas["ax"][k] * pulse
        channels["az"][i0:stop] += 0.5 * signs[k, 1] * mults[k] * sigmas["az"][k] * pulse
        channels["gx"][i0:stop] += signs[k, 2] * mults[k] * sigmas["gx"][k] * pulse


def generate(cfg: GenConfig) -> Dataset:
    """Generate ``duration * sample_rate`` aligned records from the config."""
    cfg.validate()
    rate = cfg.sample_rate
    n = int(round(cfg.duration * rate))
    if n < 1:
        raise InvalidConfig("duration", "too short for a single sample")
    t = np.arange(n) / rate
    sec_idx = np.floor(t).astype(np.int64)
    n_seconds = int(sec_idx[-1]) + 1

    states = _state_path(cfg, n_seconds)
    v_sec = _speed_path(cfg, states)
    sigmas = _per_second_sigmas(cfg, states)

    noise = stream(cfg.seed, _MOTION).standard_normal((n, 6))
    channels = {}
    for j, ch in enumerate(("ax", "ay", "az", "gx", "gy", "gz")):
        channels[ch] = sigmas[ch][sec_idx] * noise[:, j]
    channels["az"] = channels["az"] - 1.0  # rest pose: phone flat on its back

    _add_events(cfg, channels, sigmas, states, sec_idx, rate)

    return Dataset.from_arrays(
        t,
        channels["ax"], channels["ay"], channels["az"],
        channels["gx"], channels["gy"], channels["gz"],
        v_sec[sec_idx], states[sec_idx],
        meta=DatasetMeta(source="synthetic", sample_rate_hint=rate),
    )


def config_as_dict(cfg: GenConfig) -> dict:
    """JSON-ready echo of a generator config (for manifests)."""
    return {
        "seed": cfg.seed,
        "duration": cfg.duration,
        "sample_rate": cfg.sample_rate,
        "regimes": {
            state.token: {
                "speed_mean": r.speed_mean,
                "speed_jitter": r.speed_jitter,
                "accel_amplitude": r.accel_amplitude,
                "gyro_amplitude": r.gyro_amplitude,
                "event_rate": r.event_rate,
            }
            for state, r in cfg.regimes.items()
        },
        "transition": np.asarray(cfg.transition).tolist(),
        "target_mix": list(cfg.target_mix) if cfg.target_mix else None,
        "nonlinear_preset": cfg.nonlinear_preset,
    }


def preset(name: str, seed: int | None = None, duration: float | None = None) -> GenConfig:
    """Look up a shipped preset, optionally overriding seed and duration."""
    presets = default_presets()
    if name not in presets:
        raise InvalidConfig("preset", f"unknown preset {name!r}; available: {', '.join(sorted(presets))}")
    cfg = presets[name]
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if duration is not None:
        cfg = replace(cfg, duration=duration)
    return cfg
