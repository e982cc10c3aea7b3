"""Restricted Boltzmann machines and the stacked deep classifier.

An RBM is a two-layer energy model

    E(v, h) = -sum_ij W[i,j] v[i] h[j] - sum_i b[i] v[i] - sum_j a[j] h[j]

with factorial conditionals sigma(v @ W + a) and sigma(h @ W.T + b).
Training stacks RBMs greedily with one-step contrastive divergence, then
attaches a softmax head and fine-tunes the whole network with plain
mini-batch gradient descent on the cross-entropy.

Inputs are real-valued activation probabilities in [0, 1] (normalized
counts, not binary); contrastive divergence therefore uses probabilities
for both correlation phases and samples binary hidden states only to
produce the reconstruction, which lowers the variance of the update.

Tiny models (V + H <= 20) additionally support exact probabilities and
exact log-likelihood gradients by enumeration, which serve as oracles
for the approximate training rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ArityMismatch,
    DimensionMismatch,
    EmptyBatch,
    EmptyTrainingSet,
    InvalidConfig,
    TooLargeToEnumerate,
    ValueOutOfRange,
)
from .records import TrafficState
from .rng import stream

_ENUM_LIMIT = 20  # max V + H for exact enumeration


def sigmoid(x):
    """Numerically stable logistic function, elementwise.

    The exponential is only ever evaluated at non-positive arguments, so
    large |x| saturates cleanly to 0 or 1 instead of overflowing.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Rbm:
    """Weights W (visible x hidden), visible biases b, hidden biases a."""

    W: np.ndarray
    b: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],) or self.a.shape != (self.W.shape[1],):
            raise DimensionMismatch(
                f"inconsistent RBM shapes W{self.W.shape}, b{self.b.shape}, a{self.a.shape}"
            )
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.a))):
            raise DimensionMismatch("RBM parameters must be finite")

    @property
    def n_visible(self) -> int:
        return self.W.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class DbnConfig:
    layer_sizes: tuple[int, ...] = (23, 300, 300, 300)
    unsup_epochs: int = 30
    unsup_lr: float = 2.0
    sup_iters: int = 200
    sup_lr: float = 0.1
    batch_size: int = 100
    seed: int = 0
    n_classes: int = 3
    # fine-tuning batch override; None reuses batch_size.  Values larger
    # than the training set give deterministic full-batch descent, whose
    # contractive late phase keeps test error from jittering back up
    # after convergence.
    finetune_batch_size: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise InvalidConfig("layer_sizes", "need at least one hidden layer")
        if any(s < 1 for s in self.layer_sizes):
            raise InvalidConfig("layer_sizes", "all layer sizes must be >= 1")
        if self.unsup_epochs < 0 or self.sup_iters < 0:
            raise InvalidConfig("epochs", "iteration counts must be >= 0")
        if self.unsup_lr <= 0 or self.sup_lr <= 0:
            raise InvalidConfig("learning_rate", "learning rates must be > 0")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size", "must be >= 1")
        if self.finetune_batch_size is not None and self.finetune_batch_size < 1:
            raise InvalidConfig("finetune_batch_size", "must be >= 1")
        if self.n_classes < 2:
            raise InvalidConfig("n_classes", "must be >= 2")


@dataclass(frozen=True)
class Dbn:
    """Stack of RBMs plus a softmax classification head."""

    rbms: tuple[Rbm, ...]
    W_out: np.ndarray
    c_out: np.ndarray

    def __post_init__(self):
        for lower, upper in zip(self.rbms, self.rbms[1:]):
            if lower.n_hidden != upper.n_visible:
                raise DimensionMismatch(
                    f"RBM sizes do not chain: {lower.n_hidden} -> {upper.n_visible}"
                )
        if self.rbms and self.W_out.shape[0] != self.rbms[-1].n_hidden:
            raise DimensionMismatch("head width does not match top hidden layer")
        if self.c_out.shape != (self.W_out.shape[1],):
            raise DimensionMismatch("head bias length does not match class count")

    @property
    def n_inputs(self) -> int:
        return self.rbms[0].n_visible

    @property
    def n_classes(self) -> int:
        return self.W_out.shape[1]


def energy(rbm: Rbm, v: np.ndarray, h: np.ndarray) -> float:
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if v.shape != (rbm.n_visible,) or h.shape != (rbm.n_hidden,):
        raise DimensionMismatch(
            f"expected v({rbm.n_visible},), h({rbm.n_hidden},), got v{v.shape}, h{h.shape}"
        )
    return float(-(v @ rbm.W @ h) - rbm.b @ v - rbm.a @ h)


def prob_h_given_v(rbm: Rbm, v: np.ndarray) -> np.ndarray:
    """Hidden activation probabilities; accepts one vector or a batch."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != rbm.n_visible:
        raise DimensionMismatch(f"expected width {rbm.n_visible}, got {v.shape[-1]}")
    return sigmoid(v @ rbm.W + rbm.a)


def prob_v_given_h(rbm: Rbm, h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != rbm.n_hidden:
        raise DimensionMismatch(f"expected width {rbm.n_hidden}, got {h.shape[-1]}")
    return sigmoid(h @ rbm.W.T + rbm.b)


def _all_binary(k: int) -> np.ndarray:
    return ((np.arange(2**k)[:, None] >> np.arange(k)) & 1).astype(np.float64)


def _check_enumerable(rbm: Rbm):
    if rbm.n_visible + rbm.n_hidden > _ENUM_LIMIT:
        raise TooLargeToEnumerate(
            f"V + H = {rbm.n_visible + rbm.n_hidden} exceeds enumeration limit {_ENUM_LIMIT}"
        )


def _log_unnorm(rbm: Rbm, vs: np.ndarray) -> np.ndarray:
    """log sum_h exp(-E(v, h)) for each row of ``vs``, in the log domain."""
    act = vs @ rbm.W + rbm.a
    return vs @ rbm.b + np.logaddexp(0.0, act).sum(axis=-1)


def _log_partition(rbm: Rbm) -> float:
    logs = _log_unnorm(rbm, _all_binary(rbm.n_visible))
    m = logs.max()
    return float(m + np.log(np.exp(logs - m).sum()))


def exact_prob_v(rbm: Rbm, v: np.ndarray) -> float:
    """Exact model probability of a visible vector (tiny models only).

    The hidden sum collapses to a product of 1 + exp terms, accumulated
    in the log domain; the partition function enumerates all visible
    configurations.
    """
    _check_enumerable(rbm)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (rbm.n_visible,):
        raise DimensionMismatch(f"expected shape ({rbm.n_visible},), got {v.shape}")
    return float(np.exp(_log_unnorm(rbm, v[None, :])[0] - _log_partition(rbm)))


def exact_loglik_grad(rbm: Rbm, data: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradient of the mean log-likelihood wrt (W, b, a).

    Data-side expectations condition hidden units on each data vector;
    model-side expectations enumerate every visible configuration.
    """
    _check_enumerable(rbm)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != rbm.n_visible:
        raise DimensionMismatch(f"expected data shape (N, {rbm.n_visible})")
    if data.shape[0] == 0:
        raise EmptyBatch("gradient of an empty data set")
    ph_data = prob_h_given_v(rbm, data)
    n = data.shape[0]
    pos_w = data.T @ ph_data / n
    pos_b = data.mean(axis=0)
    pos_a = ph_data.mean(axis=0)

    vs = _all_binary(rbm.n_visible)
    log_p = _log_unnorm(rbm, vs) - _log_partition(rbm)
    p = np.exp(log_p)
    ph_model = prob_h_given_v(rbm, vs)
    neg_w = vs.T @ (p[:, None] * ph_model)
    neg_b = p @ vs
    neg_a = p @ ph_model
    return pos_w - neg_w, pos_b - neg_b, pos_a - neg_a


def cd1_step(rbm: Rbm, batch: np.ndarray, lr: float, rng: np.random.Generator) -> Rbm:
    """One contrastive-divergence update, returning a new RBM.

    Positive statistics pair the data with its hidden probabilities; a
    binary hidden sample then drives the reconstruction (visible
    probabilities), whose own hidden probabilities give the negative
    statistics.  Updates are averaged over the batch.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise EmptyBatch("contrastive divergence on an empty batch")
    if batch.shape[1] != rbm.n_visible:
        raise DimensionMismatch(f"batch width {batch.shape[1]} != {rbm.n_visible} visible units")
    n = batch.shape[0]
    p_h0 = prob_h_given_v(rbm, batch)
    h0 = (rng.random(p_h0.shape) < p_h0).astype(np.float64)
    v1 = prob_v_given_h(rbm, h0)
    p_h1 = prob_h_given_v(rbm, v1)
    dW = (batch.T @ p_h0 - v1.T @ p_h1) / n
    db = (batch - v1).mean(axis=0)
    da = (p_h0 - p_h1).mean(axis=0)
    return Rbm(rbm.W + lr * dW, rbm.b + lr * db, rbm.a + lr * da)


def init_rbm(n_visible: int, n_hidden: int, rng: np.random.Generator) -> Rbm:
    """Small zero-mean Gaussian weights, zero biases."""
    return Rbm(
        0.01 * rng.standard_normal((n_visible, n_hidden)),
        np.zeros(n_visible),
        np.zeros(n_hidden),
    )


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def pretrain(cfg: DbnConfig, data: np.ndarray, rng: np.random.Generator) -> list[Rbm]:
    """Greedy layer-wise CD-1 pretraining; labels are never consulted.

    Each RBM trains for ``unsup_epochs`` full passes at ``unsup_lr``; the
    next layer then trains on the deterministic hidden probabilities of
    the one below.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != cfg.layer_sizes[0]:
        raise ArityMismatch(
            f"data arity {data.shape[-1] if data.ndim else '?'} != input layer {cfg.layer_sizes[0]}"
        )
    if np.any((data < 0) | (data > 1)):
        raise ValueOutOfRange("pretraining data must lie in [0, 1]")
    rbms: list[Rbm] = []
    layer_data = data
    for n_vis, n_hid in zip(cfg.layer_sizes, cfg.layer_sizes[1:]):
        rbm = init_rbm(n_vis, n_hid, rng)
        for _ in range(cfg.unsup_epochs):
            for idx in _batches(layer_data.shape[0], cfg.batch_size, rng):
                rbm = cd1_step(rbm, layer_data[idx], cfg.unsup_lr, rng)
        rbms.append(rbm)
        layer_data = prob_h_given_v(rbm, layer_data)
    return rbms


def attach_head(rbms: list[Rbm], n_classes: int, rng: np.random.Generator) -> Dbn:
    """Put a small-Gaussian softmax head on top of pretrained layers."""
    top = rbms[-1].n_hidden
    return Dbn(tuple(rbms), 0.01 * rng.standard_normal((top, n_classes)), np.zeros(n_classes))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_hidden(dbn: Dbn, x: np.ndarray) -> list[np.ndarray]:
    """Mean-field activations layer by layer, input included."""
    acts = [x]
    for rbm in dbn.rbms:
        acts.append(prob_h_given_v(rbm, acts[-1]))
    return acts


def forward_batch(dbn: Dbn, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != dbn.n_inputs:
        raise ArityMismatch(f"input arity {x.shape[1]} != {dbn.n_inputs}")
    h = _forward_hidden(dbn, x)[-1]
    return _softmax(h @ dbn.W_out + dbn.c_out)


def forward(dbn: Dbn, x: np.ndarray) -> np.ndarray:
    """Class probability vector for one input."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dbn.n_inputs,):
        raise ArityMismatch(f"input shape {x.shape} != ({dbn.n_inputs},)")
    return forward_batch(dbn, x[None, :])[0]


def predict_batch(dbn: Dbn, x: np.ndarray) -> np.ndarray:
    """Argmax class codes; exact ties break toward the higher code."""
    probs = forward_batch(dbn, x)
    return probs.shape[1] - 1 - np.argmax(probs[:, ::-1], axis=1)


def predict(dbn: Dbn, x: np.ndarray) -> TrafficState:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dbn.n_inputs,):
        raise ArityMismatch(f"input shape {x.shape} != ({dbn.n_inputs},)")
    return TrafficState(int(predict_batch(dbn, x[None, :])[0]))


def loss_and_grads(dbn: Dbn, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradient over every trainable tensor.

    Returns ``(loss, layer_grads, dW_out, dc_out)`` where ``layer_grads``
    holds one ``(dW, da)`` pair per RBM.  Visible biases play no role in
    the feed-forward pass and so are untouched by fine-tuning.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    acts = _forward_hidden(dbn, x)
    top = acts[-1]
    probs = _softmax(top @ dbn.W_out + dbn.c_out)
    eps = np.finfo(np.float64).tiny
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + eps)))

    dz = probs.copy()
    dz[np.arange(n), y] -= 1.0
    dz /= n
    dW_out = top.T @ dz
    dc_out = dz.sum(axis=0)
    delta = dz @ dbn.W_out.T
    layer_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(dbn.rbms)
    for layer in range(len(dbn.rbms) - 1, -1, -1):
        h = acts[layer + 1]
        dpre = delta * h * (1.0 - h)
        layer_grads[layer] = (acts[layer].T @ dpre, dpre.sum(axis=0))
        if layer > 0:
            delta = dpre @ dbn.rbms[layer].W.T
    return loss, layer_grads, dW_out, dc_out


def fine_tune(dbn: Dbn, x: np.ndarray, y: np.ndarray, cfg: DbnConfig, rng: np.random.Generator) -> Dbn:
    """Mini-batch gradient descent on the cross-entropy for ``sup_iters`` steps.

    Every layer moves (the pretrained weights are just the starting
    point); the visit order reshuffles each pass through the data.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise EmptyTrainingSet("fine-tuning requires at least one example")
    if x.shape[1] != dbn.n_inputs:
        raise ArityMismatch(f"input arity {x.shape[1]} != {dbn.n_inputs}")
    if np.any((y < 0) | (y >= dbn.n_classes)):
        raise ArityMismatch("label outside the class range")
    batch_size = cfg.finetune_batch_size or cfg.batch_size
    steps = 0
    while steps < cfg.sup_iters:
        for idx in _batches(x.shape[0], batch_size, rng):
            if steps >= cfg.sup_iters:
                break
            _, layer_grads, dW_out, dc_out = loss_and_grads(dbn, x[idx], y[idx])
            rbms = tuple(
                replace(rbm, W=rbm.W - cfg.sup_lr * dW, a=rbm.a - cfg.sup_lr * da)
                for rbm, (dW, da) in zip(dbn.rbms, layer_grads)
            )
            dbn = Dbn(rbms, dbn.W_out - cfg.sup_lr * dW_out, dbn.c_out - cfg.sup_lr * dc_out)
            steps += 1
    return dbn


def mean_cross_entropy(dbn: Dbn, x: np.ndarray, y: np.ndarray) -> float:
    loss, _, _, _ = loss_and_grads(dbn, x, y)
    return loss


def train(cfg: DbnConfig, x: np.ndarray, y: np.ndarray, seed_path: tuple[int, ...] = ()) -> Dbn:
    """Pretrain, attach the head, and fine-tune in one call.

    ``seed_path`` namespaces the random streams (for example by repeat
    index) so repeated protocols stay independent yet reproducible.
    """
    rng_pre = stream(cfg.seed, *seed_path, 0)
    rbms = pretrain(cfg, x, rng_pre)
    dbn0 = attach_head(rbms, cfg.n_classes, stream(cfg.seed, *seed_path, 1))
    return fine_tune(dbn0, x, y, cfg, stream(cfg.seed, *seed_path, 2))
