/* Element-wise peephole LSTM gate kernels.
 *
 * Written branch-free with restrict pointers so the compiler can
 * auto-vectorise the loops.  lwh_exp replaces libm exp, whose scalar calls
 * would otherwise dominate the forward pass.
 */
#ifndef LWHAR_GATES_H
#define LWHAR_GATES_H

#include <stdint.h>
#include <string.h>

/* Runtime-dispatched AVX-512 / AVX2 variants of the loop kernels.  The
 * extension is built with -ffp-contract=off, so every variant performs
 * the same IEEE operations and returns bit-identical results. */
#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__) && !defined(LWH_NO_CLONES)
#define LWH_CLONES __attribute__((target_clones("avx512f", "avx2", "default")))
#else
#define LWH_CLONES
#endif

/* exp(x) to within about 1 ulp on [-708, 708]; inputs outside are clamped,
 * so the result is always finite and positive. */
static inline double lwh_exp(double x)
{
    const double log2e = 1.4426950408889634;
    const double ln2_hi = 6.93147180369123816490e-01;
    const double ln2_lo = 1.90821492927058770002e-10;
    const double shift = 6755399441055744.0; /* 1.5 * 2^52 */
    double kd, r, p, scale;
    int64_t ki, bits;

    x = x < -708.0 ? -708.0 : x;
    x = x > 708.0 ? 708.0 : x;
    kd = x * log2e + shift;
    memcpy(&ki, &kd, sizeof ki);
    kd -= shift;
    r = (x - kd * ln2_hi) - kd * ln2_lo; /* |r| <= ln2 / 2 */

    /* Taylor to degree 13: truncation < 5e-18 on |r| <= 0.347 */
    p = 1.0 / 6227020800.0;
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;

    /* the low 32 bits of kd's mantissa hold round(x * log2e) */
    bits = (int64_t)((int32_t)ki + 1023) << 52;
    memcpy(&scale, &bits, sizeof scale);
    return p * scale;
}

static inline double lwh_sigmoid(double x)
{
    return 1.0 / (1.0 + lwh_exp(-x));
}

static inline double lwh_tanh(double x)
{
    double ax = x < 0.0 ? -x : x;
    double e = lwh_exp(-2.0 * ax);
    double t = (1.0 - e) / (1.0 + e);
    return x < 0.0 ? -t : t;
}

/* Gate activations for n independent units.  zi..zo hold pre-activations
 * on entry and activated gates on exit; pi, pf, po are the peephole
 * weights matching each unit. */
LWH_CLONES static void lwh_gates_block(int n, double *restrict zi, double *restrict zf,
                                       double *restrict zc, double *restrict zo,
                                       const double *restrict c_prev, const double *restrict pi,
                                       const double *restrict pf, const double *restrict po,
                                       double *restrict c, double *restrict tc, double *restrict h)
{
    int j;
    for (j = 0; j < n; j++) {
        double ig = lwh_sigmoid(zi[j] + pi[j] * c_prev[j]);
        double fg = lwh_sigmoid(zf[j] + pf[j] * c_prev[j]);
        double gg = lwh_tanh(zc[j]);
        double cc = fg * c_prev[j] + ig * gg;
        double og = lwh_sigmoid(zo[j] + po[j] * cc);
        double t = lwh_tanh(cc);
        zi[j] = ig;
        zf[j] = fg;
        zc[j] = gg;
        zo[j] = og;
        c[j] = cc;
        tc[j] = t;
        h[j] = og * t;
    }
}

/* One time step for a batch of B windows.  zt is the (B, 4H) slab of
 * pre-activations, c_prev / c / tc / h are (B, H), ptile holds the i, f, o
 * peepholes tiled to (3, B*H), scratch has room for 4*B*H doubles.  The
 * gates are regrouped gate-major so the element loop runs over B*H units
 * instead of H, which keeps it in the vector path. */
static void lwh_step_gates(int B, int H, double *zt, const double *c_prev, const double *ptile,
                           double *c, double *tc, double *h, double *scratch)
{
    const size_t n = (size_t)B * H, row = (size_t)H * sizeof(double);
    int w, g;
    for (w = 0; w < B; w++)
        for (g = 0; g < 4; g++)
            memcpy(scratch + g * n + (size_t)w * H, zt + ((size_t)w * 4 + g) * H, row);
    lwh_gates_block((int)n, scratch, scratch + n, scratch + 2 * n, scratch + 3 * n, c_prev,
                    ptile, ptile + n, ptile + 2 * n, c, tc, h);
    for (w = 0; w < B; w++)
        for (g = 0; g < 4; g++)
            memcpy(zt + ((size_t)w * 4 + g) * H, scratch + g * n + (size_t)w * H, row);
}

LWH_CLONES static void lwh_exp_array(int n, const double *restrict x, double *restrict out)
{
    int j;
    for (j = 0; j < n; j++)
        out[j] = lwh_exp(x[j]);
}

/* out[k] += sum_j v[j] * M[j, k] for an n x m row-major M.  Each output
 * accumulates over j in a fixed order; the inner loop vectorises over k. */
LWH_CLONES static void lwh_axpy_rows(int n, int m, const double *restrict v,
                                     const double *restrict M, double *restrict out)
{
    int j, k;
    for (j = 0; j < n; j++) {
        const double a = v[j];
        const double *row = M + (size_t)j * m;
        for (k = 0; k < m; k++)
            out[k] += a * row[k];
    }
}

#endif
