"""Monte Carlo containment probabilities, decay-rate fits and the counter-example sweep."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from . import kernels
from .drift import DimensionError, DriftSpec, noise_sigma
from .sim import effective_dt, n_steps_for, run_chunked
from .spectral import RateEstimate

__all__ = [
    "ContainmentEstimate", "wilson_interval", "containment_probability",
    "containment_curve", "distance_containment", "fit_log_linear", "fit_decay_rate",
    "counterexample_sweep", "reflected_reference", "pooled_se",
]


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for k successes in n trials."""
    if n < 1:
        raise ValueError("n must be >= 1")
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    p = k / n
    z2n = z * z / n
    centre = (p + z2n / 2.0) / (1.0 + z2n)
    half = z * math.sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / (1.0 + z2n)
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    # guard the invariant lo <= p <= hi against rounding at k = 0 or k = n
    return min(lo, p), max(hi, p)


@dataclass
class ContainmentEstimate:
    p_hat: float
    n_paths: int
    ci_low: float
    ci_high: float
    dt: float
    R: float
    T: float
    bridge_corrected: bool
    n_contained: int = 0
    n_overflow: int = 0
    p_hat_raw: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def se(self) -> float:
        return math.sqrt(max(self.p_hat * (1.0 - self.p_hat), 0.0) / self.n_paths)

    def interval(self, level: float) -> tuple[float, float]:
        return wilson_interval(self.n_contained, self.n_paths, level)

    def to_record(self, drift=None, noise=None, seed=None) -> dict:
        rec = {
            "drift": drift.to_dict() if isinstance(drift, DriftSpec) else drift,
            "noise": noise, "R": self.R, "T": self.T, "dt": self.dt,
            "n_paths": self.n_paths, "seed": seed, "p_hat": self.p_hat,
            "ci_low": self.ci_low, "ci_high": self.ci_high,
            "n_overflow": self.n_overflow, "bridge_corrected": self.bridge_corrected,
            "p_hat_raw": self.p_hat_raw,
        }
        return rec

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_record(**kw), sort_keys=True)


def pooled_se(a: ContainmentEstimate, b: ContainmentEstimate) -> float:
    """sqrt(p(1-p)(1/n_a + 1/n_b)) with the pooled proportion p."""
    p = (a.n_contained + b.n_contained) / (a.n_paths + b.n_paths)
    return math.sqrt(p * (1.0 - p) * (1.0 / a.n_paths + 1.0 / b.n_paths))


def _make(k, k_raw, n, ovf, h, R, T, bridge, meta=None):
    lo, hi = wilson_interval(k, n)
    return ContainmentEstimate(k / n, n, lo, hi, h, R, T, bridge, k, ovf,
                               k_raw / n, dict(meta or {}))


def _exit_arrays(drift, sigma, x0, R, T_max, n_paths, dt, master_seed, bridge, workers,
                 noise_mode, distance=False):
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if not R > 0:
        raise ValueError("R must be positive")
    x0 = np.zeros(drift.dimension) if x0 is None else np.atleast_1d(np.asarray(x0, float))
    if x0.shape != (drift.dimension,):
        raise DimensionError(f"x0 has shape {x0.shape}, drift dimension is {drift.dimension}")
    h = effective_dt(dt, drift)
    n = n_steps_for(T_max, h)
    args = drift.kernel_args()
    mode = {"plain": 0, "rotated": 1}[noise_mode]

    def job(p0, p1):
        if distance:
            return kernels.distance_exit_steps(*args, drift.dimension, sigma, x0, h, n, R,
                                               bridge, master_seed, p0, p1)
        return kernels.exit_steps(*args, drift.dimension, sigma, x0, h, n, R, bridge, mode,
                                  master_seed, p0, p1)

    parts = run_chunked(job, n_paths, workers)
    raw, cor, ovf = (np.concatenate([p[i] for p in parts]) for i in range(3))
    return raw, cor, ovf, h


def containment_curve(drift: DriftSpec, noise, x0, R: float, horizons, n_paths: int, dt: float,
                      master_seed: int, bridge: bool = False, workers: int = 1,
                      noise_mode: str = "plain", distance: bool = False):
    """Estimates at several horizons read off the same (nested) paths."""
    sigma = noise_sigma(noise)
    horizons = [float(t) for t in horizons]
    raw, cor, ovf, h = _exit_arrays(drift, sigma, x0, R, max(horizons), n_paths, dt,
                                    master_seed, bridge, workers, noise_mode, distance)
    use_bridge = bool(bridge) and drift.dimension == 1 and sigma > 0
    out = []
    for T in horizons:
        nk = n_steps_for(T, h)
        k = int(np.count_nonzero(cor > nk))
        k_raw = int(np.count_nonzero(raw > nk))
        n_ovf = int(np.count_nonzero((ovf != 0) & (raw <= nk)))
        out.append(_make(k, k_raw, n_paths, n_ovf, h, R, T, use_bridge,
                         {"noise_mode": noise_mode, "distance": distance}))
    return out


def containment_probability(drift: DriftSpec, noise, x0, R: float, T: float, n_paths: int,
                            dt: float, master_seed: int, bridge: bool = False,
                            workers: int = 1, noise_mode: str = "plain") -> ContainmentEstimate:
    """Fraction of paths with ||X_k|| <= R at every grid step up to T.

    Overflowed paths count as exits and are reported in ``n_overflow``.
    The result does not depend on ``workers``.
    """
    return containment_curve(drift, noise, x0, R, [T], n_paths, dt, master_seed, bridge,
                             workers, noise_mode)[0]


def distance_containment(drift: DriftSpec, noise, x0, R: float, T: float, n_paths: int,
                         dt: float, master_seed: int, bridge: bool = False,
                         workers: int = 1) -> ContainmentEstimate:
    """P(sup ||Y_t - X_t|| <= R) for two independent copies started at x0."""
    return containment_curve(drift, noise, x0, R, [T], n_paths, dt, master_seed, bridge,
                             workers, distance=True)[0]


def fit_log_linear(horizons, p_hats, n_paths: int) -> RateEstimate:
    """OLS slope of -ln p against T with delta-method stderr.

    The estimates are assumed nested (same paths), so for T_i <= T_j
    Cov(ln p_i, ln p_j) = (1 - p_i) / (n p_i).
    """
    T = np.asarray(horizons, dtype=float)
    p = np.asarray(p_hats, dtype=float)
    if T.size < 2 or T.size != p.size:
        raise ValueError("need at least two horizons, one p_hat each")
    order = np.argsort(T, kind="stable")
    T, p = T[order], p[order]
    if np.any(p <= 0):
        # no fit: p < 1/n at the first empty horizon gives mu > ln(n) / T there
        T0 = float(T[np.argmax(p <= 0)])
        return RateEstimate(math.log(n_paths) / T0, "mc-fit", None, None, True,
                            {"horizons": T.tolist(), "p_hat": p.tolist()})
    y = -np.log(p)
    Tc = T - T.mean()
    Sxx = float(Tc @ Tc)
    if Sxx == 0:
        raise ValueError("horizons must not all be equal")
    c = Tc / Sxx
    mu = float(c @ y)
    v = (1.0 - p) / (n_paths * p)
    i = np.arange(T.size)
    cov = v[np.minimum.outer(i, i)]
    var = float(c @ cov @ c)
    return RateEstimate(max(mu, 0.0) if abs(mu) < 1e-15 else mu, "mc-fit",
                        math.sqrt(max(var, 0.0)), None, False,
                        {"horizons": T.tolist(), "p_hat": p.tolist()})


def fit_decay_rate(drift: DriftSpec, noise, R: float, horizons, n_paths: int, dt: float,
                   master_seed: int, x0=None, bridge: bool = True, workers: int = 1):
    """Decay rate of the containment probability from horizons on the same paths.

    Returns (RateEstimate, list of ContainmentEstimate).
    """
    horizons = [float(t) for t in horizons]
    if len(horizons) < 2 or any(t < 1 for t in horizons):
        raise ValueError("need at least two horizons, all >= 1")
    ests = containment_curve(drift, noise, x0, R, horizons, n_paths, dt, master_seed,
                             bridge, workers)
    rate = fit_log_linear(horizons, [e.p_hat for e in ests], n_paths)
    rate = RateEstimate(rate.mu, "mc-fit", rate.stderr, R, rate.lower_bound, rate.meta)
    return rate, ests


def counterexample_sweep(lambda_values, R: float = 0.5, T: float = 1.0, n_paths: int = 200_000,
                         dt: float = 1e-4, master_seed: int = 0, bridge: bool = True,
                         workers: int = 1, sigma: float = 1.0):
    """(lambda, estimate) for the drift with pull lambda on the left and 1 on the right.

    Every lambda reuses the same path indices, so the Gaussian increments
    are shared (paired seeds).  The stiffness guard sets dt = min(dt, 0.5/lambda).
    """
    lams = [float(v) for v in lambda_values]
    if not lams or any(v < 1 for v in lams):
        raise ValueError("lambda values must be >= 1")
    out = []
    for lam in lams:
        f = DriftSpec.piecewise(lam, 1.0)
        out.append((lam, containment_probability(f, sigma, [0.0], R, T, n_paths, dt,
                                                 master_seed, bridge, workers)))
    return out


def reflected_reference(R: float = 0.5, T: float = 1.0, n_paths: int = 200_000,
                        dt: float = 1e-4, master_seed: int = 1, bridge: bool = True,
                        workers: int = 1, sigma: float = 1.0) -> ContainmentEstimate:
    """P(sup |X^1_t| <= R) for the pull-1 OU process, the large-lambda limit.

    |X^1| is the reflected process; its containment event is the same as
    that of X^1 in [-R, R], so this is OU containment on its own seed.
    """
    return containment_probability(DriftSpec.ou(1.0), sigma, [0.0], R, T, n_paths, dt,
                                   master_seed, bridge, workers)
