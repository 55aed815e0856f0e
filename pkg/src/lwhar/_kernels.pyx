# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM layer kernels.

Same contract as ``lwhar._kernels_py``.  The per-window input projections
and weight gradients go through BLAS ``dgemm``.  The recurrent products and
the gate arithmetic run as plain C loops (see ``_gates.h``).  Every product
is taken per window with fixed shapes, so a window's results do not depend
on its batch mates.
"""
import numpy as np
cimport numpy as cnp
from libc.string cimport memset
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

BACKEND = "native"


cdef extern from "_gates.h" nogil:
    void lwh_step_gates(int B, int H, double *zt, const double *c_prev, const double *ptile,
                        double *c, double *tc, double *h, double *scratch)
    void lwh_exp_array(int n, const double *x, double *out)
    void lwh_axpy_rows(int n, int m, const double *v, const double *M, double *out)


cdef void _gemm(char ta, char tb, int m, int n, int k, double alpha,
                double *a, int lda, double *b, int ldb,
                double beta, double *c, int ldc) noexcept nogil:
    # row-major C[m x n] = alpha * op(A) op(B) + beta * C, via column-major dgemm
    dgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


def lstm_forward(double[:, :, ::1] X, double[:, ::1] Wx, double[:, ::1] Wh,
                 double[::1] b, double[:, ::1] peep):
    cdef int T = X.shape[0], B = X.shape[1], I = X.shape[2]
    cdef int H = Wh.shape[1], H4 = 4 * Wh.shape[1]
    if Wx.shape[0] != H4 or Wx.shape[1] != I or Wh.shape[0] != H4 or b.shape[0] != H4 \
            or peep.shape[0] != 3 or peep.shape[1] != H:
        raise ValueError("lstm_forward: inconsistent parameter shapes")
    G_arr = np.empty((T, B, H4))
    Hs_arr = np.empty((T, B, H))
    Cs_arr = np.empty((T, B, H))
    Tc_arr = np.empty((T, B, H))
    if T == 0 or B == 0:
        return Hs_arr, Cs_arr, G_arr, Tc_arr
    cdef double[:, ::1] WhT = np.ascontiguousarray(np.asarray(Wh).T)
    cdef double[::1] zero = np.zeros(B * H)
    cdef double[::1] scratch = np.empty(4 * B * H)
    cdef double[:, ::1] ptile = np.ascontiguousarray(np.tile(np.asarray(peep), (1, B)))
    cdef double[:, :, ::1] G = G_arr
    cdef double[:, :, ::1] Hs = Hs_arr
    cdef double[:, :, ::1] Cs = Cs_arr
    cdef double[:, :, ::1] Tc = Tc_arr
    cdef int t, w, k
    cdef double *z
    cdef const double *cp
    with nogil:
        for w in range(B):
            _gemm(b'N', b'T', T, H4, I, 1.0, &X[0, w, 0], B * I, &Wx[0, 0], I,
                  0.0, &G[0, w, 0], B * H4)
        for t in range(T):
            for w in range(B):
                z = &G[t, w, 0]
                for k in range(H4):
                    z[k] += b[k]
                if t > 0:
                    lwh_axpy_rows(H, H4, &Hs[t - 1, w, 0], &WhT[0, 0], z)
            cp = &Cs[t - 1, 0, 0] if t > 0 else &zero[0]
            lwh_step_gates(B, H, &G[t, 0, 0], cp, &ptile[0, 0], &Cs[t, 0, 0], &Tc[t, 0, 0],
                           &Hs[t, 0, 0], &scratch[0])
    return Hs_arr, Cs_arr, G_arr, Tc_arr


def lstm_backward(double[:, :, ::1] X, double[:, ::1] Wx, double[:, ::1] Wh,
                  double[:, ::1] peep, double[:, :, ::1] Hs, double[:, :, ::1] Cs,
                  double[:, :, ::1] G, double[:, :, ::1] Tc, double[:, :, ::1] dHs):
    cdef int T = X.shape[0], B = X.shape[1], I = X.shape[2]
    cdef int H = Wh.shape[1], H4 = 4 * Wh.shape[1]
    dZ_arr = np.empty((T, B, H4))
    dX_arr = np.zeros((T, B, I))
    dWx_arr = np.zeros((H4, I))
    dWh_arr = np.zeros((H4, H))
    db_arr = np.zeros(H4)
    dpeep_arr = np.zeros((3, H))
    if T == 0 or B == 0:
        return dX_arr, dWx_arr, dWh_arr, db_arr, dpeep_arr
    dpw_arr = np.zeros((B, 3, H))
    dh_arr = np.zeros((B, H))
    dc_arr = np.zeros((B, H))
    sWx_arr = np.empty((H4, I))
    sWh_arr = np.empty((H4, H))
    sb_arr = np.empty(H4)
    cdef double[:, :, ::1] dZ = dZ_arr
    cdef double[:, :, ::1] dX = dX_arr
    cdef double[:, ::1] dWx = dWx_arr
    cdef double[:, ::1] dWh = dWh_arr
    cdef double[::1] db = db_arr
    cdef double[:, ::1] dpeep = dpeep_arr
    cdef double[:, :, ::1] dpw = dpw_arr
    cdef double[:, ::1] dh_rec = dh_arr
    cdef double[:, ::1] dcar = dc_arr
    cdef double[:, ::1] sWx = sWx_arr
    cdef double[:, ::1] sWh = sWh_arr
    cdef double[::1] sb = sb_arr
    cdef int t, w, j, k
    cdef double *gz
    cdef double *dz
    cdef double ig, fg, gg, og, c, cprev, tc, dh, dc, dzi, dzf, dzg, dzo
    with nogil:
        for t in range(T - 1, -1, -1):
            for w in range(B):
                gz = &G[t, w, 0]
                dz = &dZ[t, w, 0]
                for j in range(H):
                    ig = gz[j]
                    fg = gz[H + j]
                    gg = gz[2 * H + j]
                    og = gz[3 * H + j]
                    c = Cs[t, w, j]
                    cprev = Cs[t - 1, w, j] if t > 0 else 0.0
                    tc = Tc[t, w, j]
                    dh = dHs[t, w, j] + dh_rec[w, j]
                    dzo = dh * tc * og * (1.0 - og)
                    dc = dcar[w, j] + dh * og * (1.0 - tc * tc) + dzo * peep[2, j]
                    dzi = dc * gg * ig * (1.0 - ig)
                    dzg = dc * ig * (1.0 - gg * gg)
                    dzf = dc * cprev * fg * (1.0 - fg)
                    dpw[w, 0, j] += dzi * cprev
                    dpw[w, 1, j] += dzf * cprev
                    dpw[w, 2, j] += dzo * c
                    dcar[w, j] = dc * fg + dzi * peep[0, j] + dzf * peep[1, j]
                    dz[j] = dzi
                    dz[H + j] = dzf
                    dz[2 * H + j] = dzg
                    dz[3 * H + j] = dzo
            if t > 0:
                memset(&dh_rec[0, 0], 0, B * H * sizeof(double))
                for w in range(B):
                    lwh_axpy_rows(H4, H, &dZ[t, w, 0], &Wh[0, 0], &dh_rec[w, 0])
        for w in range(B):
            _gemm(b'N', b'N', T, I, H4, 1.0, &dZ[0, w, 0], B * H4, &Wx[0, 0], I,
                  0.0, &dX[0, w, 0], B * I)
        for w in range(B):
            _gemm(b'T', b'N', H4, I, T, 1.0, &dZ[0, w, 0], B * H4, &X[0, w, 0], B * I,
                  0.0, &sWx[0, 0], I)
            if T > 1:
                _gemm(b'T', b'N', H4, H, T - 1, 1.0, &dZ[1, w, 0], B * H4, &Hs[0, w, 0], B * H,
                      0.0, &sWh[0, 0], H)
            else:
                memset(&sWh[0, 0], 0, H4 * H * sizeof(double))
            for k in range(H4):
                sb[k] = 0.0
            for t in range(T):
                for k in range(H4):
                    sb[k] += dZ[t, w, k]
            for k in range(H4):
                for j in range(I):
                    dWx[k, j] += sWx[k, j]
                for j in range(H):
                    dWh[k, j] += sWh[k, j]
                db[k] += sb[k]
            for k in range(3):
                for j in range(H):
                    dpeep[k, j] += dpw[w, k, j]
    return dX_arr, dWx_arr, dWh_arr, db_arr, dpeep_arr


def exp_array(const double[::1] x):
    """The kernel's exp applied to a 1-D array (exposed for accuracy tests)."""
    out = np.empty(x.shape[0])
    cdef double[::1] o = out
    if x.shape[0]:
        lwh_exp_array(x.shape[0], &x[0], &o[0])
    return out


def fnv1a64(const unsigned char[::1] data):
    cdef unsigned long long h = 0xCBF29CE484222325ULL
    cdef Py_ssize_t n = data.shape[0], idx
    with nogil:
        for idx in range(n):
            h ^= data[idx]
            h *= 0x100000001B3ULL
    return h
