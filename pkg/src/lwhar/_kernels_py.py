"""Pure-numpy LSTM layer kernels (fallback when the compiled core is absent).

Layout is time-major: sequences are ``(T, B, F)`` float64 C-contiguous
arrays.  Gate blocks are stacked in the order ``i, f, g, o`` where ``g``
is the tanh candidate; ``peep`` rows are the diagonal peepholes of
``i, f, o``.

Every matrix product is issued per window with the same shapes whatever
the batch size, so a window's results do not depend on its batch mates.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _sigmoid_(z):
    """In-place ``_sigmoid`` (same operations, no temporaries)."""
    z *= 0.5
    np.tanh(z, out=z)
    z += 1.0
    z *= 0.5
    return z


def lstm_forward(X, Wx, Wh, b, peep):
    """Run one peephole LSTM layer over all steps from zero state.

    Returns ``(Hs, Cs, G, Tc)``: hidden states, cell states, activated
    gates and ``tanh(Cs)``, shaped ``(T, B, H)`` except ``G`` which is
    ``(T, B, 4H)``.
    """
    T, B, I = X.shape
    H = Wh.shape[1]
    Xb = np.ascontiguousarray(X.transpose(1, 0, 2))
    G = np.ascontiguousarray(np.matmul(Xb, Wx.T).transpose(1, 0, 2))
    G += b
    WhT = np.ascontiguousarray(Wh.T)
    Hs = np.empty((T, B, H))
    Cs = np.empty((T, B, H))
    Tc = np.empty((T, B, H))
    p_if = peep[:2]
    p_o = peep[2]
    c_prev = np.zeros((B, H))
    zif = np.empty((B, 2, H))
    ig = np.empty((B, H))
    # the step loop is dominated by per-call overhead at small B, so every
    # operation writes into preallocated storage
    for t in range(T):
        z = G[t]
        if t > 0:
            z += np.matmul(Hs[t - 1][:, None, :], WhT)[:, 0, :]
        zv = z.reshape(B, 4, H)
        np.multiply(p_if, c_prev[:, None, :], out=zif)
        zif += zv[:, :2]
        zv[:, :2] = _sigmoid_(zif)
        g = zv[:, 2]
        np.tanh(g, out=g)
        c = Cs[t]
        np.multiply(zv[:, 1], c_prev, out=c)
        np.multiply(zv[:, 0], g, out=ig)
        c += ig
        o = zv[:, 3]
        np.multiply(p_o, c, out=ig)
        o += ig
        _sigmoid_(o)
        np.tanh(c, out=Tc[t])
        np.multiply(o, Tc[t], out=Hs[t])
        c_prev = c
    return Hs, Cs, G, Tc


def lstm_backward(X, Wx, Wh, peep, Hs, Cs, G, Tc, dHs):
    """Backpropagate ``dHs`` (loss gradient w.r.t. every hidden output).

    Parameter gradients are reduced per window first, then summed over
    windows in index order. Returns ``(dX, dWx, dWh, db, dpeep)``.
    """
    T, B, I = X.shape
    H = Wh.shape[1]
    p_i, p_f, p_o = peep
    dZ = np.empty((T, B, 4 * H))
    dpeep_w = np.zeros((B, 3, H))
    dh_rec = np.zeros((B, H))
    dc = np.zeros((B, H))
    zeros = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i = G[t, :, :H]
        f = G[t, :, H:2 * H]
        g = G[t, :, 2 * H:3 * H]
        o = G[t, :, 3 * H:]
        c = Cs[t]
        c_prev = Cs[t - 1] if t > 0 else zeros
        tc = Tc[t]
        dh = dHs[t] + dh_rec
        dzo = dh * tc * o * (1.0 - o)
        dc = dc + dh * o * (1.0 - tc * tc) + dzo * p_o
        dzi = dc * g * i * (1.0 - i)
        dzg = dc * i * (1.0 - g * g)
        dzf = dc * c_prev * f * (1.0 - f)
        dpeep_w[:, 0] += dzi * c_prev
        dpeep_w[:, 1] += dzf * c_prev
        dpeep_w[:, 2] += dzo * c
        dc = dc * f + dzi * p_i + dzf * p_f
        d = dZ[t]
        d[:, :H] = dzi
        d[:, H:2 * H] = dzf
        d[:, 2 * H:3 * H] = dzg
        d[:, 3 * H:] = dzo
        if t > 0:
            dh_rec = np.matmul(d[:, None, :], Wh)[:, 0, :]
    dZb = np.ascontiguousarray(dZ.transpose(1, 0, 2))
    dX = np.ascontiguousarray(np.matmul(dZb, Wx).transpose(1, 0, 2))

    dZ_t = dZb.transpose(0, 2, 1)  # (B, 4H, T)
    dWx_w = np.matmul(dZ_t, np.ascontiguousarray(X.transpose(1, 0, 2)))
    if T > 1:
        Hb = np.ascontiguousarray(Hs[:-1].transpose(1, 0, 2))
        dWh_w = np.matmul(np.ascontiguousarray(dZ_t[:, :, 1:]), Hb)
    else:
        dWh_w = np.zeros((B, 4 * H, H))
    db_w = dZ.sum(axis=0)

    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(4 * H)
    dpeep = np.zeros_like(peep)
    for w in range(B):
        dWx += dWx_w[w]
        dWh += dWh_w[w]
        db += db_w[w]
        dpeep += dpeep_w[w]
    return dX, dWx, dWh, db, dpeep


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h
