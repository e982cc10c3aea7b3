"""Experiment protocol: repeated random splits, metrics, curves, sweeps.

Splits are drawn over feature vectors (not raw samples), so windows that
overlap in time can land on both sides of a split; that mirrors the
protocol this toolkit reproduces and is documented rather than patched.
Every metric is a pure function of (data hash, config, seed); only the
recorded wall-clock times vary between reruns.
"""

from __future__ import annotations

import hashlib
import itertools
import time
from dataclasses import dataclass, replace

import numpy as np

from . import baselines, dbn as dbn_mod
from .errors import FlowstateError, InvalidConfig, TooFewVectors
from .features import (
    DEFAULT_TABLE,
    FeatureVector,
    Stage1Config,
    Stage2Config,
    ThresholdTable,
    as_xy,
    featurize,
    speed_only_projection,
)
from .records import Dataset
from .rng import stream

MODEL_KINDS = ("dbn", "gnb", "lda", "dbn_speed_only")

_SPLIT = 7  # rng purpose tag for split permutations


@dataclass(frozen=True)
class SplitPlan:
    seed: int = 0
    n_repeats: int = 10
    train_fraction: float = 0.7

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise InvalidConfig("train_fraction", f"must be in (0, 1), got {self.train_fraction}")
        if self.n_repeats < 1:
            raise InvalidConfig("n_repeats", f"must be >= 1, got {self.n_repeats}")


@dataclass(frozen=True)
class EvalReport:
    model_kind: str
    accuracies: tuple[float, ...]
    confusions: tuple[np.ndarray, ...]  # rows true, cols predicted
    train_times: tuple[float, ...]
    config: dict
    data_hash: str

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))


@dataclass(frozen=True)
class CurveReport:
    iters: tuple[int, ...]
    errors: np.ndarray  # (repeats, iters) mean test error per repeat
    config: dict
    data_hash: str

    @property
    def mean_errors(self) -> np.ndarray:
        return self.errors.mean(axis=0)


@dataclass(frozen=True)
class SweepCell:
    n1: int
    m1: int
    n2: int
    m2: int
    accuracies: tuple[float, ...] | None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.accuracies is None


@dataclass(frozen=True)
class SweepGrid:
    axes: dict[str, tuple[int, ...]]
    cells: tuple[SweepCell, ...]
    config: dict
    data_hash: str

    def accuracy_spread(self) -> float:
        means = [float(np.mean(c.accuracies)) for c in self.cells if not c.failed]
        return max(means) - min(means) if means else float("nan")


def _canonical_order(vectors: list[FeatureVector]) -> list[FeatureVector]:
    return sorted(vectors, key=lambda v: (v.span[0], v.span[1]))


def data_hash(vectors: list[FeatureVector]) -> str:
    """Hash of the canonically ordered vectors (order-insensitive)."""
    h = hashlib.sha256()
    for v in _canonical_order(vectors):
        h.update(np.asarray(v.values, dtype=np.float64).tobytes())
        h.update(bytes([int(v.label)]))
        h.update(int(v.span[0]).to_bytes(8, "little"))
        h.update(int(v.span[1]).to_bytes(8, "little"))
    return h.hexdigest()


def split(
    vectors: list[FeatureVector], plan: SplitPlan, repeat_index: int
) -> tuple[list[FeatureVector], list[FeatureVector]]:
    """Deterministic exact partition for one repeat.

    Vectors are sorted by span before the seeded permutation, so the
    split does not depend on input order.
    """
    if len(vectors) < 10:
        raise TooFewVectors(f"need at least 10 vectors, got {len(vectors)}")
    ordered = _canonical_order(vectors)
    n = len(ordered)
    perm = stream(plan.seed, _SPLIT, repeat_index).permutation(n)
    n_train = min(max(int(np.floor(n * plan.train_fraction + 0.5)), 1), n - 1)
    train = [ordered[i] for i in perm[:n_train]]
    test = [ordered[i] for i in perm[n_train:]]
    return train, test


def _fit_predict(model_kind, x_tr, y_tr, x_te, cfg: dbn_mod.DbnConfig, repeat: int):
    if model_kind in ("dbn", "dbn_speed_only"):
        arity = x_tr.shape[1]
        if cfg.layer_sizes[0] != arity:
            cfg = replace(cfg, layer_sizes=(arity,) + cfg.layer_sizes[1:])
        model = dbn_mod.train(cfg, x_tr, y_tr, seed_path=(repeat,))
        return model, dbn_mod.predict_batch(model, x_te)
    if model_kind == "gnb":
        model = baselines.gnb_train(x_tr, y_tr)
        return model, baselines.gnb_predict_batch(model, x_te)
    if model_kind == "lda":
        model = baselines.lda_train(x_tr, y_tr)
        return model, baselines.lda_predict_batch(model, x_te)
    raise InvalidConfig("model", f"unknown model kind {model_kind!r}; expected one of {MODEL_KINDS}")


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int = 3) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _project_if_needed(model_kind: str, vectors, table: ThresholdTable):
    if model_kind == "dbn_speed_only":
        return [speed_only_projection(v, table) for v in vectors]
    return vectors


def evaluate(
    model_kind: str,
    vectors: list[FeatureVector],
    plan: SplitPlan,
    cfg: dbn_mod.DbnConfig | None = None,
    table: ThresholdTable = DEFAULT_TABLE,
) -> EvalReport:
    """Train and test one model kind across every repeat of the plan."""
    if model_kind not in MODEL_KINDS:
        raise InvalidConfig("model", f"unknown model kind {model_kind!r}; expected one of {MODEL_KINDS}")
    cfg = cfg or dbn_mod.DbnConfig()
    vectors = _project_if_needed(model_kind, vectors, table)
    accs, cms, times = [], [], []
    for repeat in range(plan.n_repeats):
        train_v, test_v = split(vectors, plan, repeat)
        x_tr, y_tr = as_xy(train_v)
        x_te, y_te = as_xy(test_v)
        t0 = time.perf_counter()
        _, y_hat = _fit_predict(model_kind, x_tr, y_tr, x_te, cfg, repeat)
        times.append(time.perf_counter() - t0)
        cm = confusion_matrix(y_te, y_hat)
        cms.append(cm)
        accs.append(float(np.trace(cm) / cm.sum()))
    config = {
        "model_kind": model_kind,
        "plan": {"seed": plan.seed, "n_repeats": plan.n_repeats, "train_fraction": plan.train_fraction},
        "dbn": _cfg_dict(cfg) if model_kind.startswith("dbn") else None,
    }
    return EvalReport(model_kind, tuple(accs), tuple(cms), tuple(times), config, data_hash(vectors))


def _cfg_dict(cfg: dbn_mod.DbnConfig) -> dict:
    return {
        "layer_sizes": list(cfg.layer_sizes),
        "unsup_epochs": cfg.unsup_epochs,
        "unsup_lr": cfg.unsup_lr,
        "sup_iters": cfg.sup_iters,
        "sup_lr": cfg.sup_lr,
        "batch_size": cfg.batch_size,
        "finetune_batch_size": cfg.finetune_batch_size,
        "seed": cfg.seed,
        "n_classes": cfg.n_classes,
    }


def error_curve(
    vectors: list[FeatureVector],
    plan: SplitPlan,
    iter_list: list[int],
    cfg: dbn_mod.DbnConfig | None = None,
) -> CurveReport:
    """Mean test error as supervised iterations grow.

    Every iteration count restarts fine-tuning from the same pretrained
    state and random stream, so a longer run extends a shorter one
    step for step.
    """
    iters = [int(i) for i in iter_list]
    if any(b <= a for a, b in zip(iters, iters[1:])):
        raise InvalidConfig("iter_list", "must be strictly increasing")
    cfg = cfg or dbn_mod.DbnConfig()
    errors = np.empty((plan.n_repeats, len(iters)))
    for repeat in range(plan.n_repeats):
        train_v, test_v = split(vectors, plan, repeat)
        x_tr, y_tr = as_xy(train_v)
        x_te, y_te = as_xy(test_v)
        base = cfg
        if base.layer_sizes[0] != x_tr.shape[1]:
            base = replace(base, layer_sizes=(x_tr.shape[1],) + base.layer_sizes[1:])
        rbms = dbn_mod.pretrain(base, x_tr, stream(base.seed, repeat, 0))
        dbn0 = dbn_mod.attach_head(rbms, base.n_classes, stream(base.seed, repeat, 1))
        for j, n_iter in enumerate(iters):
            tuned = dbn_mod.fine_tune(
                dbn0, x_tr, y_tr, replace(base, sup_iters=n_iter), stream(base.seed, repeat, 2)
            )
            y_hat = dbn_mod.predict_batch(tuned, x_te)
            errors[repeat, j] = float(np.mean(y_hat != y_te))
    config = {
        "iters": iters,
        "plan": {"seed": plan.seed, "n_repeats": plan.n_repeats, "train_fraction": plan.train_fraction},
        "dbn": _cfg_dict(cfg),
    }
    return CurveReport(tuple(iters), errors, config, data_hash(vectors))


def sensitivity_sweep(
    ds: Dataset,
    n1_grid: list[int],
    m1_grid: list[int],
    n2_grid: list[int],
    m2_grid: list[int],
    plan: SplitPlan,
    cfg: dbn_mod.DbnConfig | None = None,
    table: ThresholdTable = DEFAULT_TABLE,
) -> SweepGrid:
    """Re-featurize and re-train per windowing-parameter combination.

    A combination that cannot be featurized or evaluated marks its cell
    failed with the reason; the sweep always completes.
    """
    cfg = cfg or dbn_mod.DbnConfig()
    cells = []
    for n1, m1, n2, m2 in itertools.product(n1_grid, m1_grid, n2_grid, m2_grid):
        try:
            vectors = featurize(ds, Stage1Config(n1, m1), Stage2Config(n2, m2, table))
            report = evaluate("dbn", vectors, plan, cfg, table)
            cells.append(SweepCell(n1, m1, n2, m2, report.accuracies))
        except FlowstateError as exc:
            cells.append(SweepCell(n1, m1, n2, m2, None, error=f"{type(exc).__name__}: {exc}"))
    axes = {
        "n1": tuple(n1_grid),
        "m1": tuple(m1_grid),
        "n2": tuple(n2_grid),
        "m2": tuple(m2_grid),
    }
    config = {
        "axes": {k: list(v) for k, v in axes.items()},
        "plan": {"seed": plan.seed, "n_repeats": plan.n_repeats, "train_fraction": plan.train_fraction},
        "dbn": _cfg_dict(cfg),
    }
    ds_hash = hashlib.sha256(
        np.concatenate([ds.t, ds.ax, ds.ay, ds.az, ds.gx, ds.gy, ds.gz, ds.v, ds.state.astype(np.float64)]).tobytes()
    ).hexdigest()
    return SweepGrid(axes, tuple(cells), config, ds_hash)
