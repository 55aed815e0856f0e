import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lwhar import kernels
from lwhar.numerics import SeededRng, ShapeError
from lwhar.recurrent import (LstmLayerParams, LstmState, NetworkParams, RnnCellParams, aggregate,
                             backward_batch, forward_batch, init_network, lstm_cell_forward,
                             network_backward, network_forward, parameter_count, rnn_cell_forward)


# -- scalar oracle (lists of python floats, math module only) ------------------

def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def _mv(M, v):
    return [sum(M[r][k] * v[k] for k in range(len(v))) for r in range(len(M))]


def scalar_lstm_step(layer, h, c, x):
    wx, wh, b, pp = (layer.w_x.tolist(), layer.w_h.tolist(), layer.b.tolist(), layer.peep.tolist())
    zx = [_mv(wx[g], x) for g in range(4)]
    zh = [_mv(wh[g], h) for g in range(4)]
    n = len(h)
    i = [_sig(zx[0][j] + zh[0][j] + pp[0][j] * c[j] + b[0][j]) for j in range(n)]
    f = [_sig(zx[1][j] + zh[1][j] + pp[1][j] * c[j] + b[1][j]) for j in range(n)]
    g = [math.tanh(zx[2][j] + zh[2][j] + b[2][j]) for j in range(n)]
    c_new = [f[j] * c[j] + i[j] * g[j] for j in range(n)]
    o = [_sig(zx[3][j] + zh[3][j] + pp[2][j] * c_new[j] + b[3][j]) for j in range(n)]
    h_new = [o[j] * math.tanh(c_new[j]) for j in range(n)]
    return h_new, c_new, (i, f, g, o)


def scalar_network(params, window, aggregation="sum"):
    H = params.hidden
    h1 = c1 = h2 = c2 = [0.0] * H
    acc = [0.0] * H
    for x in window.tolist():
        h1, c1, _ = scalar_lstm_step(params.layer1, h1, c1, x)
        h2, c2, _ = scalar_lstm_step(params.layer2, h2, c2, h1)
        acc = [a + v for a, v in zip(acc, h2)] if aggregation == "sum" else h2
    logits = [v + bb for v, bb in zip(_mv(params.head_w.tolist(), acc), params.head_b.tolist())]
    top = max(logits)
    e = [math.exp(v - top) for v in logits]
    return [v / sum(e) for v in e]


def random_layer(rng, n_in, hidden, scale=0.5):
    return LstmLayerParams(rng.normal(0, scale, (4, hidden, n_in)), rng.normal(0, scale, (4, hidden, hidden)),
                           rng.normal(0, scale, (4, hidden)), rng.normal(0, scale, (3, hidden)))


# -- baseline RNN cell --------------------------------------------------------

def test_rnn_cell_zero_params():
    p = RnnCellParams(np.zeros((4, 3)), np.zeros((4, 4)), np.zeros((2, 4)), np.zeros(4), np.zeros(2))
    h, y = rnn_cell_forward(p, np.ones(4), [1.0, -2.0, 3.0])
    assert not h.any() and not y.any()


def test_rnn_cell_identity_reduction():
    p = RnnCellParams(np.eye(3), np.zeros((3, 3)), np.zeros((1, 3)), np.zeros(3), np.zeros(1))
    x = np.array([0.01, -0.02, 0.03])
    h, _ = rnn_cell_forward(p, np.full(3, 0.7), x)
    np.testing.assert_array_equal(h, np.tanh(x))


@pytest.mark.parametrize("act", ["tanh", "sigmoid", "relu"])
def test_rnn_cell_scalar_oracle(act):
    rng = np.random.default_rng(3)
    p = RnnCellParams(rng.normal(size=(5, 3)), rng.normal(size=(5, 5)), rng.normal(size=(2, 5)),
                      rng.normal(size=5), rng.normal(size=2), act)
    h_prev, x = rng.normal(size=5), rng.normal(size=3)
    eps = {"tanh": math.tanh, "sigmoid": _sig, "relu": lambda v: max(v, 0.0)}[act]
    pre = [a + b + c for a, b, c in zip(_mv(p.w_hh.tolist(), h_prev.tolist()),
                                        _mv(p.w_ih.tolist(), x.tolist()), p.b_h.tolist())]
    h_ref = [eps(v) for v in pre]
    y_ref = [eps(a + b) for a, b in zip(_mv(p.w_ho.tolist(), h_ref), p.b_o.tolist())]
    h, y = rnn_cell_forward(p, h_prev, x)
    np.testing.assert_allclose(h, h_ref, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(y, y_ref, rtol=1e-13, atol=1e-15)


def test_rnn_cell_shape_error():
    p = RnnCellParams(np.zeros((4, 3)), np.zeros((4, 4)), np.zeros((2, 4)), np.zeros(4), np.zeros(2))
    with pytest.raises(ShapeError):
        rnn_cell_forward(p, np.zeros(4), np.zeros(2))


# -- LSTM cell ---------------------------------------------------------------

def test_lstm_cell_all_zero():
    s, g = lstm_cell_forward(LstmLayerParams.zeros(3, 5), LstmState.zeros(5), [0.3, -1.0, 2.0])
    for v in (g.i, g.f, g.o):
        np.testing.assert_array_equal(v, np.full(5, 0.5))
    assert not s.c.any() and not s.h.any()


def test_lstm_cell_unit_bias_chain_high_precision():
    p = LstmLayerParams.zeros(3, 4)
    p.b[...] = 1.0
    s, g = lstm_cell_forward(p, LstmState.zeros(4), [5.0, -5.0, 0.5])
    one = mpmath.mpf(1)
    sig1 = 1 / (1 + mpmath.exp(-one))
    c = sig1 * mpmath.tanh(one)
    o = 1 / (1 + mpmath.exp(-(one + 0 * c)))
    h = o * mpmath.tanh(c)
    np.testing.assert_allclose(g.i, float(sig1), rtol=1e-15)
    np.testing.assert_allclose(g.c_tilde, float(mpmath.tanh(one)), rtol=1e-15)
    np.testing.assert_allclose(s.c, float(c), rtol=1e-15)
    np.testing.assert_allclose(s.h, float(h), rtol=1e-15)


def test_lstm_cell_output_peephole_reads_new_cell():
    p = LstmLayerParams.zeros(1, 1)
    p.b[...] = 1.0
    p.peep[2] = 2.0  # only the output gate peephole
    prev = LstmState(np.zeros(1), np.array([3.0]))
    s, g = lstm_cell_forward(p, prev, [0.0])
    assert g.o[0] == pytest.approx(_sig(1.0 + 2.0 * s.c[0]), rel=1e-15)
    assert g.o[0] != pytest.approx(_sig(1.0 + 2.0 * 3.0))


@pytest.mark.parametrize("seed", range(5))
def test_lstm_cell_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    p = random_layer(rng, 3, 6)
    prev = LstmState(rng.uniform(-1, 1, 6), rng.normal(size=6))
    x = rng.normal(size=3)
    s, g = lstm_cell_forward(p, prev, x)
    h_ref, c_ref, gates = scalar_lstm_step(p, prev.h.tolist(), prev.c.tolist(), x.tolist())
    np.testing.assert_allclose(s.h, h_ref, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(s.c, c_ref, rtol=1e-13, atol=1e-15)
    for got, ref in zip((g.i, g.f, g.c_tilde, g.o), gates):
        np.testing.assert_allclose(got, ref, rtol=1e-13, atol=1e-15)


def test_lstm_cell_shape_error():
    with pytest.raises(ShapeError):
        lstm_cell_forward(LstmLayerParams.zeros(3, 4), LstmState.zeros(4), np.zeros(2))
    with pytest.raises(ShapeError):
        LstmLayerParams(np.zeros((4, 4, 3)), np.zeros((4, 4, 4)), np.zeros((4, 4)), np.zeros((4, 4)))


# -- network forward ---------------------------------------------------------

def test_zero_network_is_uniform():
    probs, trace = network_forward(NetworkParams.zeros(), np.random.default_rng(0).normal(size=(40, 3)))
    np.testing.assert_array_equal(probs, np.full(6, 1 / 6))
    assert trace.steps == 40


def test_single_step_window_equals_cells_then_head():
    rng = np.random.default_rng(11)
    params = NetworkParams(random_layer(rng, 3, 5), random_layer(rng, 5, 5),
                           rng.normal(size=(6, 5)), rng.normal(size=6))
    x = rng.normal(size=3)
    s1, _ = lstm_cell_forward(params.layer1, LstmState.zeros(5), x)
    s2, _ = lstm_cell_forward(params.layer2, LstmState.zeros(5), s1.h)
    logits = params.head_w @ s2.h + params.head_b
    ref = np.exp(logits - logits.max())
    ref /= ref.sum()
    probs, _ = network_forward(params, x[None, :])
    np.testing.assert_allclose(probs, ref, rtol=1e-13)


@pytest.mark.parametrize("aggregation", ["sum", "last"])
@pytest.mark.parametrize("seed", range(3))
def test_network_forward_scalar_oracle(seed, aggregation):
    rng = np.random.default_rng(100 + seed)
    params = NetworkParams(random_layer(rng, 3, 4), random_layer(rng, 4, 4),
                           rng.normal(size=(6, 4)), rng.normal(size=6))
    window = rng.normal(size=(5, 3))
    probs, _ = network_forward(params, window, aggregation)
    np.testing.assert_allclose(probs, scalar_network(params, window, aggregation), rtol=1e-12)
    assert abs(probs.sum() - 1.0) <= 1e-12


def test_network_forward_default_shape_and_determinism():
    params = init_network(SeededRng(5))
    window = np.random.default_rng(5).normal(size=(180, 3))
    p1, _ = network_forward(params, window)
    p2, _ = network_forward(params, window)
    assert p1.tobytes() == p2.tobytes()
    assert p1.shape == (6,) and abs(p1.sum() - 1) <= 1e-12


def test_network_forward_errors():
    params = NetworkParams.zeros(hidden=4)
    with pytest.raises(ShapeError):
        network_forward(params, np.zeros((0, 3)))
    with pytest.raises(ShapeError):
        network_forward(params, np.zeros((10, 4)))
    with pytest.raises(ValueError):
        network_forward(params, np.zeros((10, 3)), aggregation="mean")


def test_batch_forward_matches_single_windows():
    params = init_network(SeededRng(2), hidden=8)
    X = np.random.default_rng(2).normal(size=(5, 20, 3))
    batch = forward_batch(params, X).probs
    for b in range(5):
        np.testing.assert_allclose(batch[b], network_forward(params, X[b])[0], rtol=1e-13)


def test_head_bias_shift_keeps_argmax():
    params = init_network(SeededRng(9), hidden=6)
    X = np.random.default_rng(9).normal(size=(16, 12, 3))
    before = np.argmax(forward_batch(params, X).probs, axis=1)
    params.head_b += 37.25
    after = np.argmax(forward_batch(params, X).probs, axis=1)
    np.testing.assert_array_equal(before, after)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5.0))
def test_gate_and_cell_bounds(seed, scale):
    rng = np.random.default_rng(seed)
    params = NetworkParams(random_layer(rng, 3, 4, scale), random_layer(rng, 4, 4, scale),
                           rng.normal(size=(6, 4)), rng.normal(size=6))
    trace = forward_batch(params, rng.normal(0, 3, size=(2, 15, 3)))
    for Hs, Cs, G, Tc in trace.layers:
        H = Hs.shape[2]
        sig = np.concatenate([G[..., :2 * H], G[..., 3 * H:]], axis=-1)
        assert np.all((sig >= 0) & (sig <= 1))
        assert np.all(np.abs(G[..., 2 * H:3 * H]) <= 1)
        assert np.all(np.abs(Hs) <= 1)
        prev = np.concatenate([np.zeros_like(Cs[:1]), Cs[:-1]])
        assert np.all(np.abs(Cs) <= np.abs(prev) + 1 + 1e-12)


def test_sum_aggregation_time_permutation_invariant():
    rng = np.random.default_rng(4)
    Hs = rng.uniform(-1, 1, size=(30, 3, 7))
    perm = rng.permutation(30)
    np.testing.assert_allclose(aggregate(Hs[perm], "sum"), aggregate(Hs, "sum"), rtol=0, atol=1e-13)
    assert not np.array_equal(aggregate(Hs[perm], "last"), aggregate(Hs, "last"))


# -- backward ----------------------------------------------------------------

def test_gradient_shapes_mirror_params():
    params = init_network(SeededRng(0), hidden=5)
    _, trace = network_forward(params, np.ones((7, 3)))
    grads = network_backward(params, trace, 2)
    for (n1, a, _), (n2, g, _) in zip(params.blocks(), grads.blocks()):
        assert n1 == n2 and a.shape == g.shape


def test_saturated_prediction_has_tiny_gradients():
    params = init_network(SeededRng(1), hidden=4)
    params.head_b[:] = 0.0
    params.head_b[3] = 60.0
    probs, trace = network_forward(params, np.random.default_rng(1).normal(size=(6, 3)))
    assert probs[3] == 1.0
    grads = network_backward(params, trace, 3)
    assert np.max(np.abs(grads.flatten())) < 1e-8


@pytest.mark.parametrize("backend", ["python", "native"])
def test_duplicate_window_doubles_gradient_exactly(backend, monkeypatch):
    mod = _backend(backend)
    monkeypatch.setattr(kernels, "lstm_forward", mod.lstm_forward)
    monkeypatch.setattr(kernels, "lstm_backward", mod.lstm_backward)
    params = init_network(SeededRng(8), hidden=6)
    w = np.random.default_rng(8).normal(size=(9, 3))
    single = backward_batch(params, forward_batch(params, w[None]), [4])
    double = backward_batch(params, forward_batch(params, np.stack([w, w])), [4, 4])
    assert (2 * single.flatten()).tobytes() == double.flatten().tobytes()


def test_backward_rejects_mismatched_trace():
    params = init_network(SeededRng(0), hidden=4)
    _, trace = network_forward(params, np.ones((5, 3)))
    with pytest.raises(ShapeError):
        network_backward(init_network(SeededRng(0), hidden=5), trace, 0)
    with pytest.raises(ShapeError):
        backward_batch(params, trace, [0, 1])


# -- parameter count ---------------------------------------------------------

def test_parameter_count_hand_count():
    # per layer: 4 gates x (w_x 1 + w_h 1 + b 1) + 3 peepholes = 15; head 1 + 1
    assert parameter_count(NetworkParams.zeros(input_dim=1, hidden=1, classes=1)) == 32


def test_parameter_count_default_configuration():
    # layer1 4*(30*3 + 30*30 + 30) + 3*30, layer2 4*(30*30 + 30*30 + 30) + 3*30, head 6*30 + 6
    assert parameter_count(init_network(SeededRng(0))) == 4170 + 7410 + 186 == 11766


@pytest.mark.parametrize("hidden", [1, 2, 5, 30])
def test_parameter_count_monotone(hidden):
    assert parameter_count(NetworkParams.zeros(hidden=2 * hidden)) > parameter_count(NetworkParams.zeros(hidden=hidden))


def test_init_network_biases_are_one():
    params = init_network(SeededRng(3))
    for name, a, is_bias in params.blocks():
        if is_bias:
            assert np.all(a == 1.0), name
    assert np.all(np.abs(params.layer1.w_x) <= np.sqrt(6 / 33))


# -- native vs fallback kernels ------------------------------------------------

def _backend(name):
    if name == "python":
        from lwhar import _kernels_py
        return _kernels_py
    if not kernels.native_available():
        pytest.skip("compiled extension not built")
    from lwhar import _kernels
    return _kernels


@pytest.mark.parametrize("T,B,I,H", [(1, 1, 3, 4), (6, 3, 3, 4), (25, 7, 5, 30), (3, 1, 30, 2)])
def test_native_matches_fallback(T, B, I, H):
    py, nat = _backend("python"), _backend("native")
    rng = np.random.default_rng(T * 100 + B)
    X = rng.normal(size=(T, B, I))
    Wx, Wh = rng.normal(0, 0.5, (4 * H, I)), rng.normal(0, 0.5, (4 * H, H))
    b, peep = rng.normal(size=4 * H), rng.normal(size=(3, H))
    fa, fb = py.lstm_forward(X, Wx, Wh, b, peep), nat.lstm_forward(X, Wx, Wh, b, peep)
    for a, c in zip(fa, fb):
        np.testing.assert_allclose(a, c, rtol=1e-12, atol=1e-14)
    dH = rng.normal(size=(T, B, H))
    ga = py.lstm_backward(X, Wx, Wh, peep, *fa, dH)
    gb = nat.lstm_backward(X, Wx, Wh, peep, *fa, dH)
    for a, c in zip(ga, gb):
        np.testing.assert_allclose(a, c, rtol=1e-11, atol=1e-13)


def test_native_rejects_bad_shapes():
    nat = _backend("native")
    with pytest.raises(ValueError):
        nat.lstm_forward(np.zeros((2, 1, 3)), np.zeros((8, 3)), np.zeros((4, 4)), np.zeros(16), np.zeros((3, 4)))


@pytest.mark.parametrize("backend", ["python", "native"])
@pytest.mark.parametrize("data,expected", [
    (b"", 0xCBF29CE484222325),
    (b"a", 0xAF63DC4C8601EC8C),
    (b"foobar", 0x85944171F73967E8),
])
def test_fnv1a64_reference_vectors(backend, data, expected):
    assert _backend(backend).fnv1a64(data) == expected


@pytest.mark.parametrize("backend", ["python", "native"])
@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), B=st.integers(2, 9))
def test_window_results_independent_of_batch(backend, seed, B):
    mod = _backend(backend)
    rng = np.random.default_rng(seed)
    params = init_network(SeededRng(seed), hidden=5)
    X = rng.normal(size=(B, 7, 3))
    labels = rng.integers(0, 6, size=B)
    orig = kernels.lstm_forward, kernels.lstm_backward
    kernels.lstm_forward, kernels.lstm_backward = mod.lstm_forward, mod.lstm_backward
    try:
        batch = forward_batch(params, X)
        k = int(rng.integers(B))
        alone = forward_batch(params, X[k:k + 1])
        assert batch.probs[k].tobytes() == alone.probs[0].tobytes()
        total = backward_batch(params, batch, labels).flatten()
        summed = np.zeros_like(total)
        for w in range(B):
            summed += backward_batch(params, forward_batch(params, X[w:w + 1]), labels[w:w + 1]).flatten()
        assert total.tobytes() == summed.tobytes()
    finally:
        kernels.lstm_forward, kernels.lstm_backward = orig


def test_native_exp_accuracy():
    nat = _backend("native")
    x = np.random.default_rng(0).uniform(-708, 708, 200_000)
    got = nat.exp_array(x)
    ulps = np.abs(got - np.exp(x)) / np.spacing(np.exp(x))
    assert ulps.max() <= 2
    for v in (-700.5, -1.0, 1e-9, 0.5, 3.25, 709 - 1.5):
        ref = mpmath.exp(mpmath.mpf(v))
        assert abs(nat.exp_array(np.array([v]))[0] - float(ref)) <= 2 * np.spacing(float(ref))


def test_native_exp_clamps_to_finite():
    out = _backend("native").exp_array(np.array([-1e6, -800.0, 800.0, 1e6]))
    assert np.all(np.isfinite(out)) and np.all(out > 0)
