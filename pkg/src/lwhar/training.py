"""Loss, Adam, the mini-batch training loop and a finite-difference gradient checker."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .numerics import SeededRng
from .recurrent import (
    AGGREGATIONS,
    NetworkParams,
    backward_batch,
    cross_entropy,
    forward_batch,
    init_network,
    network_backward,
    network_forward,
)

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass
class Hyperparameters:
    window_size: int = 180
    stride: int = 100
    batch_size: int = 64
    epochs: int = 75
    learning_rate: float = 0.0025
    l2_coeff: float = 0.0015
    hidden: int = 30
    layers: int = 2
    seed: int = 0
    aggregation: str = "sum"
    normalize: bool = True
    split_ratio: float = 0.7
    subject_split: bool = False

    def __post_init__(self):
        for name in ("window_size", "stride", "batch_size", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.layers != 2:
            raise ValueError("the network has exactly two LSTM layers")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_coeff < 0:
            raise ValueError("l2_coeff must be non-negative")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if not 0 < self.split_ratio < 1:
            raise ValueError("split_ratio must lie strictly between 0 and 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


# -- loss --------------------------------------------------------------------

def mean_cross_entropy(probs_batch, labels_batch) -> float:
    probs = np.asarray(probs_batch, dtype=np.float64)
    labels = np.asarray(labels_batch, dtype=np.intp)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("mean_cross_entropy needs a non-empty (B, C) batch")
    if labels.shape != (probs.shape[0],):
        raise ValueError(f"{labels.shape[0]} labels for {probs.shape[0]} predictions")
    picked = np.maximum(probs[np.arange(probs.shape[0]), labels], PROB_FLOOR)
    return float(-np.log(picked).mean())


def l2_penalty(params: NetworkParams, coeff: float):
    """``coeff/2 * sum(w^2)`` over non-bias weights, plus its gradient."""
    if coeff < 0:
        raise ValueError("coeff must be non-negative")
    grad = params.zeros_like()
    total = 0.0
    for (_, w, is_bias), (_, g, _) in zip(params.blocks(), grad.blocks()):
        if is_bias:
            continue
        total += float(np.sum(w * w))
        g[...] = coeff * w
    return 0.5 * coeff * total, grad


# -- optimiser ---------------------------------------------------------------

@dataclass
class AdamState:
    m: NetworkParams
    v: NetworkParams
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: NetworkParams) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like())


def adam_step(state: AdamState, params: NetworkParams, grads: NetworkParams, lr: float):
    """One bias-corrected Adam update, applied in place. Returns ``(params, state)``."""
    if not lr > 0:
        raise ValueError("lr must be positive")
    for name, g, _ in grads.blocks():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for (_, p, _), (_, g, _), (_, m, _), (_, v, _) in zip(
            params.blocks(), grads.blocks(), state.m.blocks(), state.v.blocks()):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return params, state


# -- training loop -----------------------------------------------------------

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    wall_time: float = 0.0
    params: NetworkParams | None = None

    HEADER = "epoch,train_loss,train_acc,test_loss,test_acc"

    def history_lines(self):
        yield self.HEADER
        for e in self.epochs:
            yield f"{e.epoch},{e.train_loss!r},{e.train_acc!r},{e.test_loss!r},{e.test_acc!r}"


def _as_arrays(windows):
    if isinstance(windows, tuple) and len(windows) == 2:
        X, y = windows
        return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.intp)
    windows = list(windows)
    if not windows:
        return np.zeros((0, 0, 3)), np.zeros(0, dtype=np.intp)
    X = np.stack([np.asarray(w.values, dtype=np.float64) for w in windows])
    y = np.array([int(w.label) for w in windows], dtype=np.intp)
    return X, y


def evaluate(params: NetworkParams, X, y, aggregation="sum", batch_size=512):
    """``(mean loss, accuracy, predictions)``; NaNs for an empty set."""
    if X.shape[0] == 0:
        return math.nan, math.nan, np.zeros(0, dtype=np.intp)
    losses, preds = [], []
    for s in range(0, X.shape[0], batch_size):
        trace = forward_batch(params, X[s:s + batch_size], aggregation)
        losses.append(cross_entropy(trace.logits, y[s:s + batch_size]))
        preds.append(np.argmax(trace.probs, axis=1))
    losses = np.concatenate(losses)
    preds = np.concatenate(preds)
    return float(losses.mean()), float(np.mean(preds == y)), preds


def train(train_windows, test_windows, hp: Hyperparameters, params: NetworkParams | None = None,
          on_epoch=None):
    """Fit the network with mini-batch Adam.

    Windows are either sequences of ``dataset.Window`` or ``(X, y)`` array
    pairs. Train and test statistics are measured with the parameters as
    they stand at the end of each epoch.
    """
    Xtr, ytr = _as_arrays(train_windows)
    Xte, yte = _as_arrays(test_windows)
    if Xtr.shape[0] == 0:
        raise ValueError("training set is empty")
    for name, X in (("train", Xtr), ("test", Xte)):
        if X.shape[0] and X.shape[1] != hp.window_size:
            raise ValueError(f"{name} windows have length {X.shape[1]}, expected {hp.window_size}")

    rng = SeededRng(hp.seed)
    if params is None:
        params = init_network(rng, input_dim=Xtr.shape[2], hidden=hp.hidden)
    adam = AdamState.fresh(params)
    report = TrainReport(params=params)
    start = time.perf_counter()
    n = Xtr.shape[0]
    for epoch in range(1, hp.epochs + 1):
        order = rng.permutation(n)
        for s in range(0, n, hp.batch_size):
            idx = order[s:s + hp.batch_size]
            trace = forward_batch(params, Xtr[idx], hp.aggregation)
            grads = backward_batch(params, trace, ytr[idx])
            scale = 1.0 / idx.shape[0]
            for _, g, _ in grads.blocks():
                g *= scale
            if hp.l2_coeff > 0:
                _, g_l2 = l2_penalty(params, hp.l2_coeff)
                for (_, g, _), (_, r, _) in zip(grads.blocks(), g_l2.blocks()):
                    g += r
            adam_step(adam, params, grads, hp.learning_rate)
        tr_loss, tr_acc, _ = evaluate(params, Xtr, ytr, hp.aggregation)
        te_loss, te_acc, _ = evaluate(params, Xte, yte, hp.aggregation)
        stats = EpochStats(epoch, tr_loss, tr_acc, te_loss, te_acc)
        report.epochs.append(stats)
        log.info("epoch %d train_loss=%.4f train_acc=%.4f test_loss=%.4f test_acc=%.4f",
                 epoch, tr_loss, tr_acc, te_loss, te_acc)
        if on_epoch is not None:
            on_epoch(stats)
    report.wall_time = time.perf_counter() - start
    return params, report


# -- gradient verification -----------------------------------------------------

def _stacked_blocks(params: NetworkParams, flat):
    out = []
    pos = 0
    for _, a, _ in params.blocks():
        out.append(flat[:, pos:pos + a.size].reshape((flat.shape[0],) + a.shape))
        pos += a.size
    return out


def reference_losses(params: NetworkParams, flat, window, label, aggregation="sum"):
    """Cross-entropy for many flattened parameter vectors at once.

    A direct step-by-step evaluation of the cell equations, independent
    of the kernels, carried out in ``flat.dtype`` (extended precision for
    finite differencing).
    """
    dt = flat.dtype
    l1x, l1h, l1b, l1p, l2x, l2h, l2b, l2p, hw, hb = _stacked_blocks(params, flat)
    n = flat.shape[0]
    hidden = params.hidden
    xs = np.asarray(window).astype(dt)

    def sig(z):
        return 1 / (1 + np.exp(-z))

    def run(inputs, wx, wh, b, peep, per_row):
        h = np.zeros((n, hidden), dtype=dt)
        c = np.zeros((n, hidden), dtype=dt)
        outs = []
        for x in inputs:
            if per_row:
                zx = np.einsum("nghi,ni->ngh", wx, x)
            else:
                zx = np.einsum("nghi,i->ngh", wx, x)
            z = zx + np.einsum("nghk,nk->ngh", wh, h) + b
            i = sig(z[:, 0] + peep[:, 0] * c)
            f = sig(z[:, 1] + peep[:, 1] * c)
            c = f * c + i * np.tanh(z[:, 2])
            o = sig(z[:, 3] + peep[:, 2] * c)
            h = o * np.tanh(c)
            outs.append(h)
        return outs

    h1 = run(xs, l1x, l1h, l1b, l1p, per_row=False)
    h2 = run(h1, l2x, l2h, l2b, l2p, per_row=True)
    feats = h2[-1] if aggregation == "last" else sum(h2[1:], h2[0])
    logits = np.einsum("nch,nh->nc", hw, feats) + hb
    top = logits.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(logits - top).sum(axis=1))
    return lse - logits[:, label]


def gradient_check(params: NetworkParams, window, label: int, step: float = 1e-6,
                   aggregation="sum", backward=network_backward) -> float:
    """Max relative error between ``backward`` and central differences.

    Relative error per entry is ``|a - b| / max(|a|, |b|, 1e-8)``.
    """
    _, trace = network_forward(params, window, aggregation)
    analytic = backward(params, trace, label).flatten()
    theta = params.flatten().astype(np.longdouble)
    P = theta.shape[0]
    eye = np.eye(P, dtype=np.longdouble) * np.longdouble(step)
    plus = reference_losses(params, theta + eye, window, label, aggregation)
    minus = reference_losses(params, theta - eye, window, label, aggregation)
    numeric = np.asarray((plus - minus) / (2 * np.longdouble(step)), dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def random_small_case(seed: int, hidden=4, steps=6, input_dim=3, classes=6):
    """A random ``(params, window, label)`` triple for gradient checking."""
    rng = SeededRng(seed)
    params = init_network(rng, input_dim=input_dim, hidden=hidden, classes=classes)
    window = rng.normal(size=(steps, input_dim))
    label = int(rng.integers(classes))
    return params, window, label
