"""Classical baselines: Gaussian naive Bayes and linear discriminant analysis.

Both train in closed form and are fully deterministic.  Prediction ties
break toward the more congested state, matching the deep classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArityMismatch, EmptyTrainingSet, SingularCovariance
from .records import TrafficState

VAR_FLOOR = 1e-9
COV_RIDGE = 1e-6
N_CLASSES = 3


@dataclass(frozen=True)
class GnbModel:
    priors: np.ndarray
    means: np.ndarray      # (classes, features)
    variances: np.ndarray  # (classes, features), floored


@dataclass(frozen=True)
class LdaModel:
    priors: np.ndarray
    means: np.ndarray
    pooled_cov: np.ndarray  # regularized, symmetric positive definite
    _inv_cov: np.ndarray


def _check_xy(x: np.ndarray, y: np.ndarray):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise EmptyTrainingSet("training requires at least one example")
    if y.shape != (x.shape[0],):
        raise ArityMismatch("label array does not match the data matrix")
    return x, y


def gnb_train(x: np.ndarray, y: np.ndarray, var_floor: float = VAR_FLOOR) -> GnbModel:
    """Per-class Gaussians with floored variances; absent classes get zero prior."""
    x, y = _check_xy(x, y)
    d = x.shape[1]
    priors = np.zeros(N_CLASSES)
    means = np.zeros((N_CLASSES, d))
    variances = np.full((N_CLASSES, d), var_floor)
    for c in range(N_CLASSES):
        sub = x[y == c]
        if sub.shape[0] == 0:
            continue
        priors[c] = sub.shape[0] / x.shape[0]
        means[c] = sub.mean(axis=0)
        variances[c] = np.maximum(sub.var(axis=0), var_floor)
    return GnbModel(priors, means, variances)


def _tie_argmax(scores: np.ndarray) -> int:
    best = scores.max()
    return int(np.flatnonzero(scores == best)[-1])


def gnb_log_scores(model: GnbModel, x: np.ndarray) -> np.ndarray:
    """Log prior plus summed log Gaussian densities, per class."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.means.shape[1],):
        raise ArityMismatch(f"input shape {x.shape} != ({model.means.shape[1]},)")
    with np.errstate(divide="ignore"):
        log_priors = np.log(model.priors)
    d2 = (x - model.means) ** 2 / model.variances
    return log_priors - 0.5 * np.sum(np.log(2 * np.pi * model.variances) + d2, axis=1)


def gnb_predict(model: GnbModel, x: np.ndarray) -> TrafficState:
    return TrafficState(_tie_argmax(gnb_log_scores(model, x)))


def lda_train(x: np.ndarray, y: np.ndarray, ridge: float = COV_RIDGE) -> LdaModel:
    """Shared-covariance discriminant; the pooled scatter gets a ridge."""
    x, y = _check_xy(x, y)
    d = x.shape[1]
    priors = np.zeros(N_CLASSES)
    means = np.zeros((N_CLASSES, d))
    scatter = np.zeros((d, d))
    for c in range(N_CLASSES):
        sub = x[y == c]
        if sub.shape[0] == 0:
            continue
        priors[c] = sub.shape[0] / x.shape[0]
        means[c] = sub.mean(axis=0)
        centered = sub - means[c]
        scatter += centered.T @ centered
    cov = scatter / x.shape[0] + ridge * np.eye(d)
    try:
        inv = np.linalg.inv(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"pooled covariance not invertible: {exc}") from None
    return LdaModel(priors, means, cov, inv)


def lda_scores(model: LdaModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.means.shape[1],):
        raise ArityMismatch(f"input shape {x.shape} != ({model.means.shape[1]},)")
    with np.errstate(divide="ignore"):
        log_priors = np.log(model.priors)
    lin = model.means @ model._inv_cov @ x
    quad = 0.5 * np.einsum("ci,ij,cj->c", model.means, model._inv_cov, model.means)
    return lin - quad + log_priors


def lda_predict(model: LdaModel, x: np.ndarray) -> TrafficState:
    return TrafficState(_tie_argmax(lda_scores(model, x)))


def gnb_predict_batch(model: GnbModel, x: np.ndarray) -> np.ndarray:
    return np.array([int(gnb_predict(model, row)) for row in np.atleast_2d(x)])


def lda_predict_batch(model: LdaModel, x: np.ndarray) -> np.ndarray:
    return np.array([int(lda_predict(model, row)) for row in np.atleast_2d(x)])
