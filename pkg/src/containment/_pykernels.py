"""Pure numpy fallback for the compiled kernels.

Paths are advanced together as rows of an array; normals are generated a
block of steps at a time and paths that have finished are compacted away at
block boundaries.  Results match ``_kernels`` up to the last-ulp differences
between numpy's and libm's transcendental functions.
"""

from __future__ import annotations

import math

import numpy as np

from .expr import Program, eval_program
from .rng import LANE_BRIDGE, counter_normals, normal_block, path_key, uniforms_at

BLOCK = 64
BRIDGE_CUTOFF = 40.0


class _Drift:
    def __init__(self, kind, params, code, consts, d):
        self.kind = kind
        self.lam, self.lam_l, self.lam_r = (float(p) for p in params)
        self.prog = Program(np.asarray(code), np.asarray(consts), 0)
        self.d = d

    def __call__(self, X):
        """(values, bad) for an (n, d) array of states."""
        if self.kind == 0:
            F = -self.lam * X
            return F, np.zeros(len(X), bool)
        if self.kind == 1:
            x = X[:, 0]
            F = np.where(x > 0, -self.lam_r * x, np.where(x < 0, -self.lam_l * x, 0.0))
            return F[:, None], np.zeros(len(X), bool)
        if self.kind == 2:
            v = eval_program(self.prog, X[:, 0])
            return v[:, None], np.isnan(v)
        r = _norm(X)
        rho = eval_program(self.prog, np.where(r > 0, r, 1.0))
        with np.errstate(all="ignore"):
            F = (rho / np.where(r > 0, r, 1.0))[:, None] * X
        F[r == 0] = 0.0
        bad = np.isnan(rho) & (r > 0)
        return F, bad


def _norm(X):
    if X.shape[1] == 1:
        return np.abs(X[:, 0])
    s = np.zeros(len(X))
    for j in range(X.shape[1]):
        s = s + X[:, j] * X[:, j]
    return np.sqrt(s)


def _rotated(X, Z):
    """Rows of R_x^T z (sign flip in d = 1), identity for x = 0."""
    d = X.shape[1]
    r = _norm(X)
    out = Z.copy()
    nz = r > 0
    if d == 1:
        return np.where(X < 0, -Z, Z)
    rs = np.where(nz, r, 1.0)
    if d == 2:
        c = X[:, 0] / rs
        s = X[:, 1] / rs
        o0 = c * Z[:, 0] - s * Z[:, 1]
        o1 = s * Z[:, 0] + c * Z[:, 1]
        out[nz, 0] = o0[nz]
        out[nz, 1] = o1[nz]
        return out
    W = X / rs[:, None]
    neg = W[:, 0] <= 0
    W[:, 0] = np.where(neg, W[:, 0] - 1.0, W[:, 0] + 1.0)
    T = Z.copy()
    T[neg, d - 1] = -T[neg, d - 1]
    T[~neg, 0] = -T[~neg, 0]
    ww = np.zeros(len(X))
    wt = np.zeros(len(X))
    for j in range(d):
        ww = ww + W[:, j] * W[:, j]
        wt = wt + W[:, j] * T[:, j]
    with np.errstate(all="ignore"):
        R = T - 2.0 * W * (wt / ww)[:, None]
    out[nz] = R[nz]
    return out


def _step(f, X, Z, dt, sdt):
    with np.errstate(all="ignore"):
        F, bad = f(X)
        Xn = X + F * dt + sdt * Z
    bad = bad | ~np.isfinite(Xn).all(axis=1)
    return Xn, bad


def _bridge_prob(xk, xn, R, denom):
    with np.errstate(over="ignore"):
        a_up = 2.0 * (R - xk) * (R - xn) / denom
        a_lo = 2.0 * (R + xk) * (R + xn) / denom
        p_up = np.where(a_up < BRIDGE_CUTOFF, np.exp(-np.minimum(a_up, BRIDGE_CUTOFF)), 0.0)
        p_lo = np.where(a_lo < BRIDGE_CUTOFF, np.exp(-np.minimum(a_lo, BRIDGE_CUTOFF)), 0.0)
    return p_up + p_lo - p_up * p_lo


def simulate_path(kind, params, code, consts, d, sigma, x0, dt, n_steps, seed, path):
    f = _Drift(kind, params, code, consts, d)
    states = np.full((n_steps + 1, d), np.nan)
    states[0] = x0
    Z = counter_normals(path_key(seed, path), 0, n_steps * d).reshape(n_steps, d)
    sdt = sigma * math.sqrt(dt)
    for k in range(n_steps):
        xn, bad = _step(f, states[k:k + 1], Z[k:k + 1], dt, sdt)
        if bad[0]:
            return states, k + 1
        states[k + 1] = xn[0]
    return states, -1


def terminal_states(kind, params, code, consts, d, sigma, x0, dt, n_steps, seed, p0, p1):
    f = _Drift(kind, params, code, consts, d)
    n = p1 - p0
    keys = path_key(seed, np.arange(p0, p1))
    X = np.tile(np.asarray(x0, float), (n, 1))
    dead = np.zeros(n, bool)
    sdt = sigma * math.sqrt(dt)
    for k0 in range(0, n_steps, BLOCK):
        blk = min(BLOCK, n_steps - k0)
        Zb = normal_block(keys, k0 * d, blk * d).reshape(n, blk, d)
        for b in range(blk):
            X, bad = _step(f, X, Zb[:, b], dt, sdt)
            dead |= bad
    X[dead] = np.nan
    return X


def _exit_loop(n, n_steps, d, R, advance, bridge_fn):
    """Shared driver: ``advance(idx, k0, blk)`` yields per-step (Xn, bad, xk, xn) rows."""
    none = n_steps + 1
    raw = np.full(n, none, np.int64)
    cor = np.full(n, none, np.int64)
    ovf = np.zeros(n, np.int8)
    idx = np.arange(n)
    for k0 in range(0, n_steps, BLOCK):
        if idx.size == 0:
            break
        blk = min(BLOCK, n_steps - k0)
        alive = np.ones(idx.size, bool)
        for b, (dist, bad, xk, xn) in enumerate(advance(idx, k0, blk)):
            k = k0 + b
            hit_bad = alive & bad
            hit_out = alive & ~bad & (dist > R)
            for mask in (hit_bad, hit_out):
                rows = idx[mask]
                raw[rows] = k + 1
                cor[rows] = np.minimum(cor[rows], k + 1)
            ovf[idx[hit_bad]] = 1
            alive &= ~(hit_bad | hit_out)
            if bridge_fn is not None:
                cand = alive & (cor[idx] == none)
                if cand.any():
                    rows = idx[cand]
                    p = bridge_fn(xk[cand], xn[cand])
                    draw = p > 0
                    if draw.any():
                        u = np.ones(cand.sum())
                        u[draw] = bridge_fn.uniforms(rows[draw], k)
                        cor[rows[u < p]] = k + 1
        advance.keep(alive)
        idx = idx[alive]
    return raw, cor, ovf


class _Advance:
    def __init__(self, f, X, keys, d, dt, sdt, noise_mode):
        self.f, self.X, self.keys, self.d = f, X, keys, d
        self.dt, self.sdt, self.noise_mode = dt, sdt, noise_mode

    def __call__(self, idx, k0, blk):
        d = self.d
        Zb = normal_block(self.keys, k0 * d, blk * d).reshape(len(self.keys), blk, d)
        for b in range(blk):
            Z = Zb[:, b]
            if self.noise_mode == 1:
                Z = _rotated(self.X, Z)
            Xn, bad = _step(self.f, self.X, Z, self.dt, self.sdt)
            xk = self.X[:, 0]
            self.X = np.where(bad[:, None], self.X, Xn)
            yield _norm(Xn), bad, xk, Xn[:, 0]

    def keep(self, alive):
        self.X = self.X[alive]
        self.keys = self.keys[alive]


class _Bridge:
    def __init__(self, R, denom, all_keys):
        self.R, self.denom, self.all_keys = R, denom, all_keys

    def __call__(self, xk, xn):
        return _bridge_prob(xk, xn, self.R, self.denom)

    def uniforms(self, rows, k):
        return uniforms_at(self.all_keys[rows], k, LANE_BRIDGE)


def exit_steps(kind, params, code, consts, d, sigma, x0, dt, n_steps, R, bridge,
               noise_mode, seed, p0, p1):
    n = p1 - p0
    x0 = np.asarray(x0, float)
    if _norm(x0[None])[0] > R:
        z = np.zeros(n, np.int64)
        return z, z.copy(), np.zeros(n, np.int8)
    f = _Drift(kind, params, code, consts, d)
    keys = path_key(seed, np.arange(p0, p1))
    adv = _Advance(f, np.tile(x0, (n, 1)), keys, d, dt, sigma * math.sqrt(dt), noise_mode)
    br = _Bridge(R, sigma * sigma * dt, keys) if (bridge and d == 1 and sigma > 0) else None
    return _exit_loop(n, n_steps, d, R, adv, br)


class _DistanceAdvance:
    def __init__(self, f, x0, n, kx, ky, d, dt, sdt):
        self.f, self.kx, self.ky, self.d, self.dt, self.sdt = f, kx, ky, d, dt, sdt
        self.X = np.tile(x0, (n, 1))
        self.Y = self.X.copy()

    def __call__(self, idx, k0, blk):
        d = self.d
        m = len(self.kx)
        ZX = normal_block(self.kx, k0 * d, blk * d).reshape(m, blk, d)
        ZY = normal_block(self.ky, k0 * d, blk * d).reshape(m, blk, d)
        for b in range(blk):
            Xn, bx = _step(self.f, self.X, ZX[:, b], self.dt, self.sdt)
            Yn, by = _step(self.f, self.Y, ZY[:, b], self.dt, self.sdt)
            bad = bx | by
            zk = self.Y[:, 0] - self.X[:, 0]
            Zd = Yn - Xn
            self.X = np.where(bad[:, None], self.X, Xn)
            self.Y = np.where(bad[:, None], self.Y, Yn)
            yield _norm(Zd), bad, zk, Zd[:, 0]

    def keep(self, alive):
        self.X, self.Y = self.X[alive], self.Y[alive]
        self.kx, self.ky = self.kx[alive], self.ky[alive]


def distance_exit_steps(kind, params, code, consts, d, sigma, x0, dt, n_steps, R, bridge,
                        seed, p0, p1):
    n = p1 - p0
    f = _Drift(kind, params, code, consts, d)
    pairs = np.arange(p0, p1)
    kx = path_key(seed, 2 * pairs)
    ky = path_key(seed, 2 * pairs + 1)
    adv = _DistanceAdvance(f, np.asarray(x0, float), n, kx, ky, d, dt, sigma * math.sqrt(dt))
    br = _Bridge(R, 2.0 * sigma * sigma * dt, kx) if (bridge and d == 1 and sigma > 0) else None
    return _exit_loop(n, n_steps, d, R, adv, br)


def _coupled_noise(X, Z, mode):
    return Z if mode == 0 else _rotated(X, Z)


def coupled_paths(kind_f, params_f, code_f, consts_f, kind_g, params_g, code_g, consts_g,
                  d, sigma, dt, n_steps, seed, path, mode):
    f = _Drift(kind_f, params_f, code_f, consts_f, d)
    g = _Drift(kind_g, params_g, code_g, consts_g, d)
    X = np.full((n_steps + 1, d), np.nan)
    Y = np.full((n_steps + 1, d), np.nan)
    NX = np.full((n_steps, d), np.nan)
    NY = np.full((n_steps, d), np.nan)
    X[0] = 0.0
    Y[0] = 0.0
    Z = counter_normals(path_key(seed, path), 0, n_steps * d).reshape(n_steps, d)
    sdt = sigma * math.sqrt(dt)
    for k in range(n_steps):
        nx = _coupled_noise(X[k:k + 1], Z[k:k + 1], mode)
        ny = _coupled_noise(Y[k:k + 1], Z[k:k + 1], mode)
        NX[k], NY[k] = nx[0], ny[0]
        xn, bx = _step(f, X[k:k + 1], nx, dt, sdt)
        yn, by = _step(g, Y[k:k + 1], ny, dt, sdt)
        if bx[0] or by[0]:
            return X, Y, NX, NY, k + 1
        X[k + 1], Y[k + 1] = xn[0], yn[0]
    return X, Y, NX, NY, -1


def coupled_violation(kind_f, params_f, code_f, consts_f, kind_g, params_g, code_g, consts_g,
                      d, sigma, dt, n_steps, K, seed, p0, p1, mode):
    f = _Drift(kind_f, params_f, code_f, consts_f, d)
    g = _Drift(kind_g, params_g, code_g, consts_g, d)
    n = p1 - p0
    viol = np.zeros(n)
    tk = np.full(n, n_steps + 1, np.int64)
    ovf = np.zeros(n, np.int8)
    idx = np.arange(n)
    keys = path_key(seed, np.arange(p0, p1))
    X = np.zeros((n, d))
    Y = np.zeros((n, d))
    sdt = sigma * math.sqrt(dt)
    for k0 in range(0, n_steps, BLOCK):
        if idx.size == 0:
            break
        blk = min(BLOCK, n_steps - k0)
        Zb = normal_block(keys, k0 * d, blk * d).reshape(idx.size, blk, d)
        alive = np.ones(idx.size, bool)
        for b in range(blk):
            Z = Zb[:, b]
            Xn, bx = _step(f, X, _coupled_noise(X, Z, mode), dt, sdt)
            Yn, by = _step(g, Y, _coupled_noise(Y, Z, mode), dt, sdt)
            bad = alive & (bx | by)
            ovf[idx[bad]] = 1
            alive &= ~bad
            ny = _norm(Yn)
            v = _norm(Xn) - ny
            rows = idx[alive]
            viol[rows] = np.maximum(viol[rows], v[alive])
            X = np.where(alive[:, None], Xn, X)
            Y = np.where(alive[:, None], Yn, Y)
            reached = alive & (ny >= K)
            tk[idx[reached]] = k0 + b + 1
            alive &= ~reached
        X, Y, keys, idx = X[alive], Y[alive], keys[alive], idx[alive]
    return viol, tk, ovf


def flux_solve_dirichlet(w_half, b, h):
    w_half = np.asarray(w_half, float)
    N = len(b)
    S = np.concatenate(([0.0], np.cumsum(b)))
    c = h * np.sum(S / w_half) / np.sum(1.0 / w_half)
    q = c - h * S
    steps = h * q / w_half
    mid = (N + 1) // 2
    y = np.empty(N)
    y[:mid] = np.cumsum(steps[:mid])
    y[mid:] = -np.cumsum(steps[mid + 1:][::-1])[::-1]
    return q, y


def flux_solve_neumann(w_half, b, h):
    q = -h * np.cumsum(b)
    y = -np.cumsum((h * q / np.asarray(w_half, float))[::-1])[::-1]
    return q, y
