"""Recurrent cells and the two-layer peephole LSTM classifier.

Gate order everywhere is ``i, f, c, o`` (``c`` being the tanh candidate).
Peepholes are diagonal: one vector per gate for ``i``, ``f`` and ``o``.
The input gate and forget gate look at the previous cell state, the
output gate at the freshly updated one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .numerics import ShapeError, SeededRng, activation, init_matrix, log_softmax, sigmoid, softmax

GATES = ("i", "f", "c", "o")
PEEPHOLE_GATES = ("i", "f", "o")
AGGREGATIONS = ("sum", "last")
N_CLASSES = 6
N_CHANNELS = 3


# -- baseline RNN cell -------------------------------------------------------

@dataclass
class RnnCellParams:
    w_ih: np.ndarray  # hidden x input
    w_hh: np.ndarray  # hidden x hidden
    w_ho: np.ndarray  # output x hidden
    b_h: np.ndarray
    b_o: np.ndarray
    act: str = "tanh"


def rnn_cell_forward(p: RnnCellParams, h_prev, x):
    """One step of an Elman cell: returns ``(h, y)``."""
    h_prev = np.asarray(h_prev, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    hidden = p.w_hh.shape[0]
    if (p.w_hh.shape != (hidden, hidden) or p.w_ih.shape != (hidden, x.shape[0])
            or h_prev.shape != (hidden,) or p.b_h.shape != (hidden,)
            or p.w_ho.shape[1] != hidden or p.b_o.shape != (p.w_ho.shape[0],)):
        raise ShapeError(
            f"rnn_cell_forward: w_ih {p.w_ih.shape}, w_hh {p.w_hh.shape}, w_ho {p.w_ho.shape}, "
            f"h_prev {h_prev.shape}, x {x.shape}"
        )
    h = activation(p.act, p.w_hh @ h_prev + p.w_ih @ x + p.b_h)
    y = activation(p.act, p.w_ho @ h + p.b_o)
    return h, y


# -- LSTM layer --------------------------------------------------------------

@dataclass
class LstmLayerParams:
    """Weights of one peephole LSTM layer, stored gate-stacked.

    ``w_x[k]``, ``w_h[k]`` and ``b[k]`` belong to gate ``GATES[k]``;
    ``peep[k]`` to ``PEEPHOLE_GATES[k]``.
    """

    w_x: np.ndarray  # (4, hidden, input)
    w_h: np.ndarray  # (4, hidden, hidden)
    b: np.ndarray  # (4, hidden)
    peep: np.ndarray  # (3, hidden)

    def __post_init__(self):
        hidden = self.w_h.shape[1]
        if (self.w_x.ndim != 3 or self.w_x.shape[:2] != (4, hidden)
                or self.w_h.shape != (4, hidden, hidden)
                or self.b.shape != (4, hidden) or self.peep.shape != (3, hidden)):
            raise ShapeError(
                f"LstmLayerParams: w_x {self.w_x.shape}, w_h {self.w_h.shape}, "
                f"b {self.b.shape}, peep {self.peep.shape}"
            )

    @property
    def hidden(self) -> int:
        return self.w_h.shape[1]

    @property
    def input_dim(self) -> int:
        return self.w_x.shape[2]

    @classmethod
    def zeros(cls, input_dim: int, hidden: int) -> "LstmLayerParams":
        return cls(np.zeros((4, hidden, input_dim)), np.zeros((4, hidden, hidden)),
                   np.zeros((4, hidden)), np.zeros((3, hidden)))

    def gate(self, name: str):
        """``(w_x, w_h, b, peephole-or-None)`` views for one gate."""
        k = GATES.index(name)
        peep = self.peep[PEEPHOLE_GATES.index(name)] if name in PEEPHOLE_GATES else None
        return self.w_x[k], self.w_h[k], self.b[k], peep

    def fused(self):
        h4 = 4 * self.hidden
        return (self.w_x.reshape(h4, self.input_dim), self.w_h.reshape(h4, self.hidden),
                self.b.reshape(h4), self.peep)


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int) -> "LstmState":
        return cls(np.zeros(hidden), np.zeros(hidden))


@dataclass
class GateRecord:
    i: np.ndarray
    f: np.ndarray
    c_tilde: np.ndarray
    o: np.ndarray


def lstm_cell_forward(p: LstmLayerParams, s_prev: LstmState, x):
    """Single peephole LSTM step (reference path, one window, no batching)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.input_dim,) or s_prev.h.shape != (p.hidden,) or s_prev.c.shape != (p.hidden,):
        raise ShapeError(
            f"lstm_cell_forward: expected x ({p.input_dim},) and state ({p.hidden},), "
            f"got x {x.shape}, h {s_prev.h.shape}, c {s_prev.c.shape}"
        )
    h_prev, c_prev = s_prev.h, s_prev.c
    wx, wh, b, pi = p.gate("i")
    i = sigmoid(wx @ x + wh @ h_prev + pi * c_prev + b)
    wx, wh, b, pf = p.gate("f")
    f = sigmoid(wx @ x + wh @ h_prev + pf * c_prev + b)
    wx, wh, b, _ = p.gate("c")
    c_tilde = np.tanh(wx @ x + wh @ h_prev + b)
    c = f * c_prev + i * c_tilde
    wx, wh, b, po = p.gate("o")
    o = sigmoid(wx @ x + wh @ h_prev + po * c + b)
    h = o * np.tanh(c)
    return LstmState(h, c), GateRecord(i, f, c_tilde, o)


# -- network -----------------------------------------------------------------

@dataclass
class NetworkParams:
    layer1: LstmLayerParams
    layer2: LstmLayerParams
    head_w: np.ndarray  # (classes, hidden)
    head_b: np.ndarray  # (classes,)

    def __post_init__(self):
        if self.layer2.input_dim != self.layer1.hidden:
            raise ShapeError(
                f"layer2 input {self.layer2.input_dim} != layer1 hidden {self.layer1.hidden}")
        if self.head_w.shape != (self.head_b.shape[0], self.layer2.hidden):
            raise ShapeError(f"head_w {self.head_w.shape} vs head_b {self.head_b.shape}")

    @property
    def input_dim(self) -> int:
        return self.layer1.input_dim

    @property
    def hidden(self) -> int:
        return self.layer1.hidden

    @property
    def classes(self) -> int:
        return self.head_b.shape[0]

    @classmethod
    def zeros(cls, input_dim=N_CHANNELS, hidden=30, classes=N_CLASSES) -> "NetworkParams":
        return cls(LstmLayerParams.zeros(input_dim, hidden), LstmLayerParams.zeros(hidden, hidden),
                   np.zeros((classes, hidden)), np.zeros(classes))

    def blocks(self):
        """``(name, array, is_bias)`` for each underlying storage array."""
        out = []
        for lname, layer in (("layer1", self.layer1), ("layer2", self.layer2)):
            out += [(f"{lname}.w_x", layer.w_x, False), (f"{lname}.w_h", layer.w_h, False),
                    (f"{lname}.b", layer.b, True), (f"{lname}.peep", layer.peep, False)]
        out += [("head_w", self.head_w, False), ("head_b", self.head_b, True)]
        return out

    def tensors(self):
        """Per-gate views in serialisation order.

        For each layer and each gate ``i, f, c, o``: ``w_x``, ``w_h``,
        ``b`` and (except for ``c``) the peephole; then ``head_w`` and
        ``head_b``.
        """
        out = []
        for lname, layer in (("layer1", self.layer1), ("layer2", self.layer2)):
            for g in GATES:
                wx, wh, b, peep = layer.gate(g)
                out += [(f"{lname}.{g}.w_x", wx), (f"{lname}.{g}.w_h", wh), (f"{lname}.{g}.b", b)]
                if peep is not None:
                    out.append((f"{lname}.{g}.peep", peep))
        out += [("head_w", self.head_w), ("head_b", self.head_b)]
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            LstmLayerParams(*(a.copy() for a in (self.layer1.w_x, self.layer1.w_h, self.layer1.b, self.layer1.peep))),
            LstmLayerParams(*(a.copy() for a in (self.layer2.w_x, self.layer2.w_h, self.layer2.b, self.layer2.peep))),
            self.head_w.copy(), self.head_b.copy())

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams.zeros(self.input_dim, self.hidden, self.classes)

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a, _ in self.blocks()])

    def assign_flat(self, vec) -> None:
        pos = 0
        for _, a, _ in self.blocks():
            a[...] = np.reshape(vec[pos:pos + a.size], a.shape)
            pos += a.size

    def equals(self, other: "NetworkParams") -> bool:
        """Bitwise equality of every parameter."""
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for (_, a, _), (_, b, _) in zip(self.blocks(), other.blocks())
        )


Gradients = NetworkParams


def init_network(rng: SeededRng, input_dim=N_CHANNELS, hidden=30, classes=N_CLASSES,
                 bias=1.0) -> NetworkParams:
    """Glorot-uniform weights, every bias set to ``bias``."""

    def layer(n_in):
        w_x = np.stack([init_matrix(hidden, n_in, "uniform_scaled", rng) for _ in GATES])
        w_h = np.stack([init_matrix(hidden, hidden, "uniform_scaled", rng) for _ in GATES])
        peep = init_matrix(3, hidden, "uniform_scaled", rng)
        b = init_matrix(4, hidden, ("constant", bias))
        return LstmLayerParams(w_x, w_h, b, peep)

    l1 = layer(input_dim)
    l2 = layer(hidden)
    head_w = init_matrix(classes, hidden, "uniform_scaled", rng)
    head_b = init_matrix(1, classes, ("constant", bias))[0]
    return NetworkParams(l1, l2, head_w, head_b)


def parameter_count(params: NetworkParams) -> int:
    return sum(a.size for _, a, _ in params.blocks())


@dataclass
class ForwardTrace:
    """Everything backward needs, for a batch of ``B`` windows.

    ``layers[k]`` holds ``(Hs, Cs, G, Tc)`` for layer ``k`` in time-major
    layout: hidden outputs, cell states, activated gates ``i, f, c, o``
    and ``tanh`` of the cell states.
    """

    inputs: np.ndarray  # (T, B, input)
    layers: list
    features: np.ndarray  # (B, hidden) aggregated layer-2 output
    logits: np.ndarray  # (B, classes)
    probs: np.ndarray  # (B, classes)
    aggregation: str = "sum"

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]


def _check_windows(params: NetworkParams, windows) -> np.ndarray:
    X = np.asarray(windows, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] == 0:
        raise ShapeError(f"expected a (T, {params.input_dim}) window or a (B, T, "
                         f"{params.input_dim}) batch with T >= 1, got shape {X.shape}")
    if X.shape[2] != params.input_dim:
        raise ShapeError(f"window has {X.shape[2]} channels, model expects {params.input_dim}")
    return np.ascontiguousarray(X.transpose(1, 0, 2))


def aggregate(Hs: np.ndarray, aggregation: str) -> np.ndarray:
    """Collapse layer-2 outputs ``(T, B, H)`` to per-window features ``(B, H)``."""
    if aggregation == "sum":
        return Hs.sum(axis=0)
    if aggregation == "last":
        return Hs[-1].copy()
    raise ValueError(f"unknown aggregation {aggregation!r}; expected one of {AGGREGATIONS}")


def _rowwise(A: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``A @ M`` one row at a time, so each row is independent of batch size."""
    return np.matmul(A[:, None, :], M)[:, 0, :]


def forward_batch(params: NetworkParams, windows, aggregation="sum") -> ForwardTrace:
    """Forward a ``(B, T, channels)`` batch (or a single ``(T, channels)`` window)."""
    X = _check_windows(params, windows)
    layers = []
    inp = X
    for layer in (params.layer1, params.layer2):
        Wx, Wh, b, peep = layer.fused()
        out = kernels.lstm_forward(inp, Wx, Wh, b, peep)
        layers.append(out)
        inp = out[0]
    feats = aggregate(layers[1][0], aggregation)
    logits = _rowwise(feats, params.head_w.T) + params.head_b
    return ForwardTrace(X, layers, feats, logits, softmax(logits), aggregation)


def predict_proba(params: NetworkParams, windows, aggregation="sum", batch_size=512) -> np.ndarray:
    X = np.asarray(windows, dtype=np.float64)
    if X.ndim == 2:
        return forward_batch(params, X, aggregation).probs[0]
    chunks = [forward_batch(params, X[s:s + batch_size], aggregation).probs
              for s in range(0, X.shape[0], batch_size)]
    return np.concatenate(chunks) if chunks else np.zeros((0, params.classes))


def network_forward(params: NetworkParams, window, aggregation="sum"):
    """Classify one ``(T, channels)`` window; returns ``(probs, trace)``."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ShapeError(f"network_forward expects a (T, channels) window, got {window.shape}")
    trace = forward_batch(params, window, aggregation)
    return trace.probs[0], trace


def cross_entropy(logits: np.ndarray, labels) -> np.ndarray:
    """Per-window negative log-likelihood computed from logits."""
    labels = np.asarray(labels, dtype=np.intp)
    return -log_softmax(logits)[np.arange(labels.shape[0]), labels]


def backward_batch(params: NetworkParams, trace: ForwardTrace, labels) -> NetworkParams:
    """Gradient of the SUMMED cross-entropy of the batch in ``trace``.

    Per-window contributions are accumulated in window order.
    """
    labels = np.asarray(labels, dtype=np.intp).reshape(-1)
    B = trace.probs.shape[0]
    if labels.shape[0] != B:
        raise ShapeError(f"{labels.shape[0]} labels for a batch of {B}")
    if (trace.features.shape[1] != params.hidden or trace.logits.shape[1] != params.classes
            or trace.inputs.shape[2] != params.input_dim):
        raise ShapeError("trace does not match parameter shapes")
    grads = params.zeros_like()
    dlogits = trace.probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    for w in range(B):
        grads.head_w += np.outer(dlogits[w], trace.features[w])
        grads.head_b += dlogits[w]
    dfeat = _rowwise(dlogits, params.head_w)

    T = trace.steps
    dH = np.zeros((T, B, params.hidden))
    if trace.aggregation == "sum":
        dH[:] = dfeat
    else:
        dH[-1] = dfeat

    inputs = (trace.inputs, trace.layers[0][0])
    for k in (1, 0):
        layer = (params.layer1, params.layer2)[k]
        glayer = (grads.layer1, grads.layer2)[k]
        Wx, Wh, _, peep = layer.fused()
        dX, dWx, dWh, db, dpeep = kernels.lstm_backward(inputs[k], Wx, Wh, peep, *trace.layers[k], dH)
        glayer.w_x[...] = dWx.reshape(glayer.w_x.shape)
        glayer.w_h[...] = dWh.reshape(glayer.w_h.shape)
        glayer.b[...] = db.reshape(glayer.b.shape)
        glayer.peep[...] = dpeep
        dH = dX
    return grads


def network_backward(params: NetworkParams, trace: ForwardTrace, true_label: int) -> NetworkParams:
    """d(cross-entropy)/d(params) for the single window in ``trace``."""
    if trace.probs.shape[0] != 1:
        raise ShapeError("network_backward expects a single-window trace")
    return backward_batch(params, trace, [true_label])
