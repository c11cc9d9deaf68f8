# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path-stepping and spectral kernels.

Same signatures and arithmetic order as ``_pykernels``; the two agree to
rounding (libm vs numpy transcendental functions) and bit for bit in all
integer (RNG) work.  All loops run without the GIL.
"""

import numpy as np

from libc.math cimport sqrt, log, cos, sin, exp, tanh, fabs, pow, isfinite, NAN
from libc.stdint cimport uint64_t, int64_t, int32_t, int8_t
from libc.stdlib cimport malloc, free

cdef uint64_t GOLDEN = <uint64_t>0x9E3779B97F4A7C15
cdef uint64_t PATH_MULT = <uint64_t>0xD1B54A32D192ED03
cdef uint64_t MIX1 = <uint64_t>0xBF58476D1CE4E5B9
cdef uint64_t MIX2 = <uint64_t>0x94D049BB133111EB
cdef uint64_t BRIDGE_LANE = (<uint64_t>1) << 56
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0
# exp(-40) < 2**-54, the smallest unit uniform: skipping the draw is exact
cdef double BRIDGE_CUTOFF = 40.0

cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline uint64_t path_key(uint64_t seed, uint64_t path) noexcept nogil:
    return mix64(mix64(seed + GOLDEN) ^ (path * PATH_MULT))


cdef inline double unit_at(uint64_t key, uint64_t counter) noexcept nogil:
    cdef uint64_t r = mix64(key ^ mix64(counter + GOLDEN))
    return (<double>(r >> 11) + 0.5) * INV_2_53


cdef struct NormalGen:
    uint64_t key
    int64_t pair
    double c
    double s


cdef inline void gen_init(NormalGen* g, uint64_t key) noexcept nogil:
    g.key = key
    g.pair = -1


cdef inline double gen_normal(NormalGen* g, int64_t n) noexcept nogil:
    cdef int64_t p = n >> 1
    cdef double u1, u2, rad, th
    if p != g.pair:
        u1 = unit_at(g.key, <uint64_t>(2 * p))
        u2 = unit_at(g.key, <uint64_t>(2 * p + 1))
        rad = sqrt(-2.0 * log(u1))
        th = TWO_PI * u2
        g.c = rad * cos(th)
        g.s = rad * sin(th)
        g.pair = p
    return g.c if (n & 1) == 0 else g.s


cdef struct Drift:
    int kind
    int d
    double lam
    double lam_l
    double lam_r
    const int32_t* code
    const double* consts
    int ncode


cdef double prog_eval(const int32_t* code, const double* consts, int ncode, double v) noexcept nogil:
    cdef double stack[64]  # expr.MAX_STACK
    cdef int sp = 0
    cdef int i, op
    cdef double a, b, r
    if not isfinite(v):
        return NAN
    for i in range(ncode):
        op = code[2 * i]
        if op == 0:
            stack[sp] = consts[code[2 * i + 1]]
            sp += 1
            continue
        if op == 1:
            stack[sp] = v
            sp += 1
            continue
        if (3 <= op <= 7) or op >= 12:
            b = stack[sp - 1]
            a = stack[sp - 2]
            sp -= 1
            if op == 3:
                r = a + b
            elif op == 4:
                r = a - b
            elif op == 5:
                r = a * b
            elif op == 6:
                r = a / b
            elif op == 7:
                r = pow(a, b)
            elif op == 12:
                r = a if a < b else b
            else:
                r = a if a > b else b
        else:
            a = stack[sp - 1]
            if op == 2:
                r = -a
            elif op == 8:
                r = exp(a)
            elif op == 9:
                r = tanh(a)
            elif op == 10:
                r = fabs(a)
            else:
                r = <double>((a > 0) - (a < 0))
        if not isfinite(r):
            return NAN
        stack[sp - 1] = r
    return stack[0]


cdef inline double vnorm(const double* x, int d) noexcept nogil:
    cdef double s = 0.0
    cdef int j
    if d == 1:
        return fabs(x[0])
    for j in range(d):
        s += x[j] * x[j]
    return sqrt(s)


cdef bint drift_eval(const Drift* f, const double* x, double* out) noexcept nogil:
    """f(x) into out; False when the expression left its domain."""
    cdef int j
    cdef double v, r, rho
    if f.kind == 0:
        for j in range(f.d):
            out[j] = -f.lam * x[j]
        return True
    if f.kind == 1:
        v = x[0]
        if v > 0:
            out[0] = -f.lam_r * v
        elif v < 0:
            out[0] = -f.lam_l * v
        else:
            out[0] = 0.0
        return True
    if f.kind == 2:
        v = prog_eval(f.code, f.consts, f.ncode, x[0])
        out[0] = v
        return isfinite(v)
    r = vnorm(x, f.d)
    if r == 0:
        for j in range(f.d):
            out[j] = 0.0
        return True
    rho = prog_eval(f.code, f.consts, f.ncode, r)
    if not isfinite(rho):
        return False
    v = rho / r
    for j in range(f.d):
        out[j] = v * x[j]
    return True


cdef void rotated(const double* x, const double* z, double* out, double* w, int d) noexcept nogil:
    """out = R_x^T z (the noise seen by a state x under rotation coupling)."""
    cdef double r = vnorm(x, d)
    cdef double c, s, ww, wt
    cdef int j, flip
    if r == 0:
        for j in range(d):
            out[j] = z[j]
        return
    if d == 1:
        out[0] = -z[0] if x[0] < 0 else z[0]
        return
    if d == 2:
        c = x[0] / r
        s = x[1] / r
        out[0] = c * z[0] - s * z[1]
        out[1] = s * z[0] + c * z[1]
        return
    for j in range(d):
        w[j] = x[j] / r
    if w[0] <= 0:
        w[0] -= 1.0
        flip = d - 1
    else:
        w[0] += 1.0
        flip = 0
    ww = 0.0
    wt = 0.0
    for j in range(d):
        out[j] = -z[j] if j == flip else z[j]
        ww += w[j] * w[j]
        wt += w[j] * out[j]
    for j in range(d):
        out[j] = out[j] - 2.0 * w[j] * (wt / ww)


cdef inline bint em_step(const Drift* f, const double* x, double* xn, double* fx,
                         const double* dz, double dt, double sdt) noexcept nogil:
    cdef int j
    if not drift_eval(f, x, fx):
        return False
    for j in range(f.d):
        xn[j] = x[j] + fx[j] * dt + sdt * dz[j]
        if not isfinite(xn[j]):
            return False
    return True


cdef Drift make_drift(int kind, const double[::1] params, const int32_t[:, ::1] code,
                      const double[::1] consts, int d):
    cdef Drift f
    f.kind = kind
    f.d = d
    f.lam = params[0]
    f.lam_l = params[1]
    f.lam_r = params[2]
    f.ncode = code.shape[0]
    f.code = &code[0, 0] if code.shape[0] > 0 else NULL
    f.consts = &consts[0] if consts.shape[0] > 0 else NULL
    return f


cdef inline double bridge_prob(double xk, double xn, double R, double denom) noexcept nogil:
    cdef double a_up = 2.0 * (R - xk) * (R - xn) / denom
    cdef double a_lo = 2.0 * (R + xk) * (R + xn) / denom
    cdef double p_up = exp(-a_up) if a_up < BRIDGE_CUTOFF else 0.0
    cdef double p_lo = exp(-a_lo) if a_lo < BRIDGE_CUTOFF else 0.0
    return p_up + p_lo - p_up * p_lo


def simulate_path(int kind, const double[::1] params, const int32_t[:, ::1] code,
                  const double[::1] consts, int d, double sigma, const double[::1] x0,
                  double dt, int64_t n_steps, uint64_t seed, uint64_t path):
    """One plain-noise path; returns (states, overflow_step or -1)."""
    cdef Drift f = make_drift(kind, params, code, consts, d)
    states = np.full((n_steps + 1, d), np.nan)
    cdef double[:, ::1] S = states
    cdef double* fx = <double*>malloc(d * sizeof(double))
    cdef double* z = <double*>malloc(d * sizeof(double))
    cdef NormalGen g
    cdef int64_t k, overflow = -1
    cdef int j
    cdef double sdt = sigma * sqrt(dt)
    gen_init(&g, path_key(seed, path))
    try:
        with nogil:
            for j in range(d):
                S[0, j] = x0[j]
            for k in range(n_steps):
                for j in range(d):
                    z[j] = gen_normal(&g, k * d + j)
                if not em_step(&f, &S[k, 0], &S[k + 1, 0], fx, z, dt, sdt):
                    for j in range(d):
                        S[k + 1, j] = NAN
                    overflow = k + 1
                    break
    finally:
        free(fx)
        free(z)
    return states, overflow


def terminal_states(int kind, const double[::1] params, const int32_t[:, ::1] code,
                    const double[::1] consts, int d, double sigma, const double[::1] x0,
                    double dt, int64_t n_steps, uint64_t seed, int64_t p0, int64_t p1):
    """X_T for paths p0..p1-1; overflowed paths give nan rows."""
    cdef Drift f = make_drift(kind, params, code, consts, d)
    cdef int64_t n = p1 - p0
    out = np.empty((n, d))
    cdef double[:, ::1] O = out
    cdef double* x = <double*>malloc(d * sizeof(double))
    cdef double* xn = <double*>malloc(d * sizeof(double))
    cdef double* fx = <double*>malloc(d * sizeof(double))
    cdef double* z = <double*>malloc(d * sizeof(double))
    cdef double* tmp
    cdef NormalGen g
    cdef int64_t i, k
    cdef int j
    cdef bint ok
    cdef double sdt = sigma * sqrt(dt)
    try:
        with nogil:
            for i in range(n):
                gen_init(&g, path_key(seed, <uint64_t>(p0 + i)))
                for j in range(d):
                    x[j] = x0[j]
                ok = True
                for k in range(n_steps):
                    for j in range(d):
                        z[j] = gen_normal(&g, k * d + j)
                    if not em_step(&f, x, xn, fx, z, dt, sdt):
                        ok = False
                        break
                    tmp = x
                    x = xn
                    xn = tmp
                for j in range(d):
                    O[i, j] = x[j] if ok else NAN
    finally:
        free(x)
        free(xn)
        free(fx)
        free(z)
    return out


def exit_steps(int kind, const double[::1] params, const int32_t[:, ::1] code,
               const double[::1] consts, int d, double sigma, const double[::1] x0,
               double dt, int64_t n_steps, double R, bint bridge, int noise_mode,
               uint64_t seed, int64_t p0, int64_t p1):
    """First-exit step indices for paths p0..p1-1.

    Returns (raw, corrected, overflow): ``raw`` is the first grid index with
    |x| > R, ``corrected`` additionally counts bridge-declared crossings
    (d = 1 only), both ``n_steps + 1`` when the path stays inside.  A
    non-finite state counts as an exit at that step and sets ``overflow``.
    ``noise_mode`` 0 drives with plain increments, 1 with R_x^T dB.
    """
    cdef Drift f = make_drift(kind, params, code, consts, d)
    cdef int64_t n = p1 - p0
    cdef int64_t none = n_steps + 1
    raw_a = np.full(n, none, dtype=np.int64)
    cor_a = np.full(n, none, dtype=np.int64)
    ovf_a = np.zeros(n, dtype=np.int8)
    cdef int64_t[::1] raw = raw_a
    cdef int64_t[::1] cor = cor_a
    cdef int8_t[::1] ovf = ovf_a
    cdef double* x = <double*>malloc(d * sizeof(double))
    cdef double* xn = <double*>malloc(d * sizeof(double))
    cdef double* fx = <double*>malloc(d * sizeof(double))
    cdef double* z = <double*>malloc(d * sizeof(double))
    cdef double* zr = <double*>malloc(d * sizeof(double))
    cdef double* w = <double*>malloc(d * sizeof(double))
    cdef double* tmp
    cdef const double* dz
    cdef NormalGen g
    cdef uint64_t key
    cdef int64_t i, k, be
    cdef int j
    cdef double sdt = sigma * sqrt(dt)
    cdef double denom = sigma * sigma * dt
    cdef double pb
    cdef bint use_bridge = bridge and d == 1 and sigma > 0
    try:
        with nogil:
            for i in range(n):
                key = path_key(seed, <uint64_t>(p0 + i))
                gen_init(&g, key)
                for j in range(d):
                    x[j] = x0[j]
                if vnorm(x, d) > R:
                    raw[i] = 0
                    cor[i] = 0
                    continue
                be = none
                for k in range(n_steps):
                    for j in range(d):
                        z[j] = gen_normal(&g, k * d + j)
                    if noise_mode == 1:
                        rotated(x, z, zr, w, d)
                        dz = zr
                    else:
                        dz = z
                    if not em_step(&f, x, xn, fx, dz, dt, sdt):
                        ovf[i] = 1
                        raw[i] = k + 1
                        if be == none:
                            be = k + 1
                        break
                    if vnorm(xn, d) > R:
                        raw[i] = k + 1
                        if be == none:
                            be = k + 1
                        break
                    if use_bridge and be == none:
                        pb = bridge_prob(x[0], xn[0], R, denom)
                        if pb > 0 and unit_at(key, BRIDGE_LANE | <uint64_t>k) < pb:
                            be = k + 1
                    tmp = x
                    x = xn
                    xn = tmp
                cor[i] = be
    finally:
        free(x)
        free(xn)
        free(fx)
        free(z)
        free(zr)
        free(w)
    return raw_a, cor_a, ovf_a


def distance_exit_steps(int kind, const double[::1] params, const int32_t[:, ::1] code,
                        const double[::1] consts, int d, double sigma, const double[::1] x0,
                        double dt, int64_t n_steps, double R, bint bridge,
                        uint64_t seed, int64_t p0, int64_t p1):
    """Exit steps of Z = Y - X for two independent copies started at x0.

    Copy X of pair p uses stream 2p, copy Y uses 2p+1.  The bridge
    correction (d = 1) treats Z as locally Brownian with strength sqrt(2) sigma.
    """
    cdef Drift f = make_drift(kind, params, code, consts, d)
    cdef int64_t n = p1 - p0
    cdef int64_t none = n_steps + 1
    raw_a = np.full(n, none, dtype=np.int64)
    cor_a = np.full(n, none, dtype=np.int64)
    ovf_a = np.zeros(n, dtype=np.int8)
    cdef int64_t[::1] raw = raw_a
    cdef int64_t[::1] cor = cor_a
    cdef int8_t[::1] ovf = ovf_a
    cdef double* buf = <double*>malloc(8 * d * sizeof(double))
    cdef double* x = buf
    cdef double* xn = buf + d
    cdef double* y = buf + 2 * d
    cdef double* yn = buf + 3 * d
    cdef double* fx = buf + 4 * d
    cdef double* zx = buf + 5 * d
    cdef double* zy = buf + 6 * d
    cdef double* zd = buf + 7 * d
    cdef double* tmp
    cdef NormalGen gx, gy
    cdef uint64_t keyx
    cdef int64_t i, k, be
    cdef int j
    cdef double sdt = sigma * sqrt(dt)
    cdef double denom = 2.0 * sigma * sigma * dt
    cdef double pb
    cdef bint use_bridge = bridge and d == 1 and sigma > 0
    try:
        with nogil:
            for i in range(n):
                keyx = path_key(seed, <uint64_t>(2 * (p0 + i)))
                gen_init(&gx, keyx)
                gen_init(&gy, path_key(seed, <uint64_t>(2 * (p0 + i) + 1)))
                for j in range(d):
                    x[j] = x0[j]
                    y[j] = x0[j]
                be = none
                for k in range(n_steps):
                    for j in range(d):
                        zx[j] = gen_normal(&gx, k * d + j)
                        zy[j] = gen_normal(&gy, k * d + j)
                    if not (em_step(&f, x, xn, fx, zx, dt, sdt) and em_step(&f, y, yn, fx, zy, dt, sdt)):
                        ovf[i] = 1
                        raw[i] = k + 1
                        if be == none:
                            be = k + 1
                        break
                    for j in range(d):
                        zd[j] = yn[j] - xn[j]
                    if vnorm(zd, d) > R:
                        raw[i] = k + 1
                        if be == none:
                            be = k + 1
                        break
                    if use_bridge and be == none:
                        pb = bridge_prob(y[0] - x[0], zd[0], R, denom)
                        if pb > 0 and unit_at(keyx, BRIDGE_LANE | <uint64_t>k) < pb:
                            be = k + 1
                    tmp = x
                    x = xn
                    xn = tmp
                    tmp = y
                    y = yn
                    yn = tmp
                cor[i] = be
    finally:
        free(buf)
    return raw_a, cor_a, ovf_a


cdef inline void coupled_noise(const double* x, const double* z, double* out, double* w,
                               int d, int mode) noexcept nogil:
    cdef int j
    if mode == 0:
        for j in range(d):
            out[j] = z[j]
    else:
        rotated(x, z, out, w, d)


def coupled_paths(int kind_f, const double[::1] params_f, const int32_t[:, ::1] code_f,
                  const double[::1] consts_f, int kind_g, const double[::1] params_g,
                  const int32_t[:, ::1] code_g, const double[::1] consts_g,
                  int d, double sigma, double dt, int64_t n_steps,
                  uint64_t seed, uint64_t path, int mode):
    """One coupled pair from the origin with logged realised noise.

    mode 0: identical plain noise; otherwise R_x^T dB (the sign coupling when d = 1).
    Returns (X, Y, noise_x, noise_y, overflow_step or -1).
    """
    cdef Drift f = make_drift(kind_f, params_f, code_f, consts_f, d)
    cdef Drift g = make_drift(kind_g, params_g, code_g, consts_g, d)
    X_a = np.full((n_steps + 1, d), np.nan)
    Y_a = np.full((n_steps + 1, d), np.nan)
    NX_a = np.full((n_steps, d), np.nan)
    NY_a = np.full((n_steps, d), np.nan)
    cdef double[:, ::1] X = X_a
    cdef double[:, ::1] Y = Y_a
    cdef double[:, ::1] NX = NX_a
    cdef double[:, ::1] NY = NY_a
    cdef double* fx = <double*>malloc(d * sizeof(double))
    cdef double* z = <double*>malloc(d * sizeof(double))
    cdef double* w = <double*>malloc(d * sizeof(double))
    cdef NormalGen gen
    cdef int64_t k, overflow = -1
    cdef int j
    cdef double sdt = sigma * sqrt(dt)
    gen_init(&gen, path_key(seed, path))
    try:
        with nogil:
            for j in range(d):
                X[0, j] = 0.0
                Y[0, j] = 0.0
            for k in range(n_steps):
                for j in range(d):
                    z[j] = gen_normal(&gen, k * d + j)
                coupled_noise(&X[k, 0], z, &NX[k, 0], w, d, mode)
                coupled_noise(&Y[k, 0], z, &NY[k, 0], w, d, mode)
                if not (em_step(&f, &X[k, 0], &X[k + 1, 0], fx, &NX[k, 0], dt, sdt)
                        and em_step(&g, &Y[k, 0], &Y[k + 1, 0], fx, &NY[k, 0], dt, sdt)):
                    for j in range(d):
                        X[k + 1, j] = NAN
                        Y[k + 1, j] = NAN
                    overflow = k + 1
                    break
    finally:
        free(fx)
        free(z)
        free(w)
    return X_a, Y_a, NX_a, NY_a, overflow


def coupled_violation(int kind_f, const double[::1] params_f, const int32_t[:, ::1] code_f,
                      const double[::1] consts_f, int kind_g, const double[::1] params_g,
                      const int32_t[:, ::1] code_g, const double[::1] consts_g,
                      int d, double sigma, double dt, int64_t n_steps, double K,
                      uint64_t seed, int64_t p0, int64_t p1, int mode):
    """Per path: max over grid steps k <= T_K of |X_k| - |Y_k|, and the T_K step.

    T_K is the first step with |Y| >= K (``n_steps + 1`` if never); the
    simulation of a path stops there.
    """
    cdef Drift f = make_drift(kind_f, params_f, code_f, consts_f, d)
    cdef Drift g = make_drift(kind_g, params_g, code_g, consts_g, d)
    cdef int64_t n = p1 - p0
    viol_a = np.zeros(n)
    tk_a = np.full(n, n_steps + 1, dtype=np.int64)
    ovf_a = np.zeros(n, dtype=np.int8)
    cdef double[::1] viol = viol_a
    cdef int64_t[::1] tk = tk_a
    cdef int8_t[::1] ovf = ovf_a
    cdef double* buf = <double*>malloc(8 * d * sizeof(double))
    cdef double* x = buf
    cdef double* xn = buf + d
    cdef double* y = buf + 2 * d
    cdef double* yn = buf + 3 * d
    cdef double* fx = buf + 4 * d
    cdef double* z = buf + 5 * d
    cdef double* nz = buf + 6 * d
    cdef double* w = buf + 7 * d
    cdef double* tmp
    cdef NormalGen gen
    cdef int64_t i, k
    cdef int j
    cdef double v, ny_norm, best
    cdef double sdt = sigma * sqrt(dt)
    try:
        with nogil:
            for i in range(n):
                gen_init(&gen, path_key(seed, <uint64_t>(p0 + i)))
                for j in range(d):
                    x[j] = 0.0
                    y[j] = 0.0
                best = 0.0
                for k in range(n_steps):
                    for j in range(d):
                        z[j] = gen_normal(&gen, k * d + j)
                    coupled_noise(x, z, nz, w, d, mode)
                    if not em_step(&f, x, xn, fx, nz, dt, sdt):
                        ovf[i] = 1
                        break
                    coupled_noise(y, z, nz, w, d, mode)
                    if not em_step(&g, y, yn, fx, nz, dt, sdt):
                        ovf[i] = 1
                        break
                    ny_norm = vnorm(yn, d)
                    v = vnorm(xn, d) - ny_norm
                    if v > best:
                        best = v
                    tmp = x
                    x = xn
                    xn = tmp
                    tmp = y
                    y = yn
                    yn = tmp
                    if ny_norm >= K:
                        tk[i] = k + 1
                        break
                viol[i] = best
    finally:
        free(buf)
    return viol_a, tk_a, ovf_a


def flux_solve_dirichlet(const double[::1] w_half, const double[::1] b, double h):
    """Solve -(q_{i+1/2} - q_{i-1/2})/h = b_i, q = w (y_{i+1} - y_i)/h, y_0 = y_{N+1} = 0.

    Works with cumulative fluxes instead of LU elimination so that the tiny
    ground-state eigenvalue of the weighted operator is not lost to
    cancellation.  Returns (q, y); y is accumulated from whichever wall is
    nearer to avoid subtracting two large partial sums.
    """
    cdef Py_ssize_t N = b.shape[0]
    cdef Py_ssize_t m, i, mid = (N + 1) // 2
    q_a = np.empty(N + 1)
    y_a = np.empty(N)
    cdef double[::1] q = q_a
    cdef double[::1] y = y_a
    cdef double S = 0.0, num = 0.0, den = 0.0, c, acc
    with nogil:
        for m in range(N + 1):
            q[m] = S
            num += S / w_half[m]
            den += 1.0 / w_half[m]
            if m < N:
                S += b[m]
        c = h * num / den
        for m in range(N + 1):
            q[m] = c - h * q[m]
        acc = 0.0
        for i in range(1, mid + 1):
            acc += h * q[i - 1] / w_half[i - 1]
            y[i - 1] = acc
        acc = 0.0
        for i in range(N, mid, -1):
            acc -= h * q[i] / w_half[i]
            y[i - 1] = acc
    return q_a, y_a


def flux_solve_neumann(const double[::1] w_half, const double[::1] b, double h):
    """Half-domain variant: zero flux at node 0, y_M = 0 at the wall."""
    cdef Py_ssize_t M = b.shape[0]
    cdef Py_ssize_t m
    q_a = np.empty(M)
    y_a = np.empty(M)
    cdef double[::1] q = q_a
    cdef double[::1] y = y_a
    cdef double S = 0.0, acc = 0.0
    with nogil:
        for m in range(M):
            S += b[m]
            q[m] = -h * S
        for m in range(M - 1, -1, -1):
            acc -= h * q[m] / w_half[m]
            y[m] = acc
    return q_a, y_a
