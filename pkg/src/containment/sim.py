"""Euler-Maruyama simulation, coupled pairs, exit detection and hitting times."""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._pykernels import _bridge_prob
from .drift import DimensionError, DriftSpec, noise_sigma
from .rng import RngStream

__all__ = [
    "Trajectory", "CoupledPair", "PathOverflowError",
    "effective_dt", "n_steps_for", "euler_maruyama", "simulate_coupled_1d",
    "simulate_coupled_nd", "coupled_violation_stats", "first_exit", "bridge_probability",
    "hitting_steps", "hitting_times", "trajectory_csv", "run_chunked",
]

CHUNK = 2048


class PathOverflowError(ArithmeticError):
    """A state became non-finite; ``step`` is the first bad grid index."""

    def __init__(self, step: int, trajectory=None):
        super().__init__(f"non-finite state at step {step}")
        self.step = step
        self.trajectory = trajectory


@dataclass
class Trajectory:
    dt: float
    states: np.ndarray
    exit_time: float | None = None
    bridge_exit_flag: bool = False
    overflow: int | None = None

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.states))

    @property
    def dimension(self) -> int:
        return self.states.shape[1]


@dataclass
class CoupledPair:
    X: Trajectory
    Y: Trajectory
    noise_x: np.ndarray
    noise_y: np.ndarray
    shared_seed: tuple
    T_K_discrete: float | None = None
    coupling: str = field(default="sign")


def effective_dt(dt: float, *drifts: DriftSpec) -> float:
    """Stiffness guard: min(dt, 0.5 / largest built-in pull strength)."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    pulls = [p for p in (d.max_pull for d in drifts) if p]
    return min(dt, 0.5 / max(pulls)) if pulls else dt


def n_steps_for(T: float, dt: float) -> int:
    return int(math.floor(T / dt + 1e-9))


def _stream_args(stream) -> tuple[int, int]:
    if isinstance(stream, RngStream):
        return stream.master_seed, stream.path_index
    return int(stream), 0


def euler_maruyama(drift: DriftSpec, noise, x0, dt: float, T: float, stream,
                   guard: bool = True) -> Trajectory:
    """X_{k+1} = X_k + f(X_k) dt + sigma sqrt(dt) xi_k with xi_k from ``stream``.

    ``stream`` is an :class:`RngStream` or a bare master seed (path 0).
    Raises :class:`PathOverflowError` on a non-finite state.
    """
    sigma = noise_sigma(noise)
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if x0.shape != (drift.dimension,):
        raise DimensionError(f"x0 has shape {x0.shape}, drift dimension is {drift.dimension}")
    if not (0 < dt <= T):
        raise ValueError(f"need 0 < dt <= T, got dt={dt}, T={T}")
    h = effective_dt(dt, drift) if guard else dt
    seed, path = _stream_args(stream)
    states, ovf = kernels.simulate_path(*drift.kernel_args(), drift.dimension, sigma, x0, h,
                                        n_steps_for(T, h), seed, path)
    traj = Trajectory(h, states)
    if ovf >= 0:
        traj.overflow = int(ovf)
        raise PathOverflowError(int(ovf), traj)
    return traj


def _coupled(f, g, dt, T, K, stream, sigma, d_check):
    if f.dimension != g.dimension:
        raise DimensionError("f and g must have the same dimension")
    d_check(f.dimension)
    sigma = noise_sigma(sigma)
    h = effective_dt(dt, f, g)
    seed, path = _stream_args(stream)
    X, Y, NX, NY, ovf = kernels.coupled_paths(*f.kernel_args(), *g.kernel_args(), f.dimension,
                                              sigma, h, n_steps_for(T, h), seed, path, 1)
    pair = CoupledPair(Trajectory(h, X), Trajectory(h, Y), NX, NY, (seed, path),
                       coupling="sign" if f.dimension == 1 else "rotation")
    if ovf >= 0:
        raise PathOverflowError(int(ovf), pair)
    ny = np.linalg.norm(Y, axis=1)
    hit = np.flatnonzero(ny >= K)
    pair.T_K_discrete = float(hit[0] * h) if hit.size else None
    return pair


def _need_1d(d):
    if d != 1:
        raise DimensionError("sign coupling needs one-dimensional drifts")


def _need_nd(d):
    if d < 2:
        raise DimensionError("rotation coupling needs d >= 2")


def simulate_coupled_1d(f: DriftSpec, g: DriftSpec, dt: float, T: float, K: float, stream,
                        sigma=1.0) -> CoupledPair:
    """X and Y from 0 driven by sgn(X) dB and sgn(Y) dB for one shared B.

    A state that is exactly 0 uses the factor +1 (otherwise both paths
    would stay frozen at the origin).
    """
    return _coupled(f, g, dt, T, K, stream, sigma, _need_1d)


def simulate_coupled_nd(f: DriftSpec, g: DriftSpec, dt: float, T: float, K: float, stream,
                        sigma=1.0) -> CoupledPair:
    """X and Y from 0 driven by R_X^T dB and R_Y^T dB for one shared B."""
    return _coupled(f, g, dt, T, K, stream, sigma, _need_nd)


def run_chunked(fn, n_paths: int, workers: int = 1, chunk: int = CHUNK) -> list:
    """fn(p0, p1) over fixed path chunks; results in chunk order whatever ``workers`` is."""
    bounds = [(p, min(p + chunk, n_paths)) for p in range(0, n_paths, chunk)]
    if workers <= 1 or len(bounds) == 1:
        return [fn(p0, p1) for p0, p1 in bounds]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda b: fn(*b), bounds))


def coupled_violation_stats(f: DriftSpec, g: DriftSpec, dt: float, T: float, K: float,
                            n_paths: int, master_seed: int, sigma=1.0, workers: int = 1):
    """Per-path max of ||X_k|| - ||Y_k|| over grid steps up to the discrete T_K.

    Returns (violation, T_K step, overflow flags, effective dt).
    """
    if f.dimension != g.dimension:
        raise DimensionError("f and g must have the same dimension")
    sigma = noise_sigma(sigma)
    h = effective_dt(dt, f, g)
    n = n_steps_for(T, h)
    fa, ga = f.kernel_args(), g.kernel_args()

    def job(p0, p1):
        return kernels.coupled_violation(*fa, *ga, f.dimension, sigma, h, n, K,
                                         master_seed, p0, p1, 1)

    parts = run_chunked(job, n_paths, workers)
    viol, tk, ovf = (np.concatenate([p[i] for p in parts]) for i in range(3))
    return viol, tk, ovf, h


def bridge_probability(xk, xn, R: float, sigma: float, dt: float):
    """Chance that a Brownian bridge between two inside points touched +-R."""
    return _bridge_prob(np.asarray(xk, float), np.asarray(xn, float), R, sigma * sigma * dt)


def first_exit(traj: Trajectory, R: float, bridge_correction: bool = False, noise=None,
               stream=None):
    """Earliest time with ||X_k|| > R, or None.

    With ``bridge_correction`` (d = 1 only) an exit may also be declared
    between two inside grid points using one bridge-lane uniform of
    ``stream`` per step; such an exit is stamped at the later grid point.
    Sets ``traj.exit_time`` and ``traj.bridge_exit_flag``.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    r = np.linalg.norm(traj.states, axis=1)
    out = np.flatnonzero(~(r <= R))
    k_out = int(out[0]) if out.size else None
    k_bridge = None
    if bridge_correction and traj.dimension == 1 and k_out != 0:
        if noise is None or stream is None:
            raise ValueError("bridge correction needs the noise and the stream")
        sigma = noise_sigma(noise)
        last = (k_out if k_out is not None else len(r)) - 1
        x = traj.states[:last + 1, 0]
        if sigma > 0 and last > 0:
            p = bridge_probability(x[:-1], x[1:], R, sigma, traj.dt)
            if not isinstance(stream, RngStream):
                stream = RngStream(int(stream), 0)
            u = stream.bridge_uniforms(last)
            hits = np.flatnonzero((p > 0) & (u < p))
            if hits.size:
                k_bridge = int(hits[0]) + 1
    traj.bridge_exit_flag = False
    if k_bridge is not None and (k_out is None or k_bridge < k_out):
        traj.exit_time = k_bridge * traj.dt
        traj.bridge_exit_flag = True
    else:
        traj.exit_time = None if k_out is None else k_out * traj.dt
    return traj.exit_time


def hitting_steps(values, eps: float) -> list[tuple[int, int | None]]:
    """Grid indices of the alternating strip exits and returns to zero.

    tau_0 = 0; upsilon_k is the first index after tau_k with |y| >= eps;
    tau_{k+1} is the first index after upsilon_k at which y is 0 or has
    the opposite sign to y at upsilon_k.  The last pair may have no upsilon.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    y = np.asarray(values, dtype=np.float64).ravel()
    out = []
    tau = 0
    n = len(y)
    while True:
        far = np.flatnonzero(np.abs(y[tau + 1:]) >= eps)
        if far.size == 0:
            out.append((tau, None))
            return out
        ups = tau + 1 + int(far[0])
        out.append((tau, ups))
        s = np.sign(y[ups])
        back = np.flatnonzero(np.sign(y[ups + 1:]) != s)
        if back.size == 0:
            return out
        tau = ups + 1 + int(back[0])
        if tau >= n:
            return out


def hitting_times(traj, eps: float) -> list[tuple[float, float | None]]:
    """:func:`hitting_steps` on a 1-d trajectory, converted to times."""
    if isinstance(traj, Trajectory):
        if traj.dimension != 1:
            raise DimensionError("hitting times need a 1-d trajectory")
        dt, y = traj.dt, traj.states[:, 0]
    else:
        dt, y = 1.0, traj
    return [(t * dt, None if u is None else u * dt) for t, u in hitting_steps(y, eps)]


def _fmt(v) -> str:
    return repr(float(v))


def trajectory_csv(traj: Trajectory, R: float | None = None, prefix=()) -> str:
    """CSV ``t,x1,...,xd[,exit]``; ``exit`` is 1 from the exit time onwards."""
    d = traj.dimension
    buf = io.StringIO()
    cols = [name for name, _ in prefix] + ["t"] + [f"x{j + 1}" for j in range(d)]
    if R is not None:
        cols.append("exit")
    buf.write(",".join(cols) + "\n")
    t = traj.times
    for k in range(len(traj.states)):
        row = [str(v) for _, v in prefix] + [_fmt(t[k])] + [_fmt(v) for v in traj.states[k]]
        if R is not None:
            row.append("1" if traj.exit_time is not None and t[k] >= traj.exit_time - 1e-12 else "0")
        buf.write(",".join(row) + "\n")
    return buf.getvalue()
