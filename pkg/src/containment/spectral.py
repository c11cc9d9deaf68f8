"""Decay rates of Ornstein-Uhlenbeck containment probabilities.

For dX = -X dt + sqrt(2) dB the containment probability of [-R, R] decays
like exp(-mu_D(R) T) where mu_D(R) is the smallest eigenvalue nu of

    y'' - x y' = -nu y,   y(-R) = y(R) = 0.

With w(x) = exp(-x^2/2) the operator is (w y')' / w, so the problem is the
symmetric generalized eigenproblem -(w y')' = nu w y.  It is discretized by
the conservative three-point stencil and the ground state is found by inverse
iteration.  Each inverse step is done on cumulative fluxes
(:func:`kernels.flux_solve_dirichlet`) because mu_D(R) is of order
exp(-R^2/2) and an LU solve of the tridiagonal matrix loses it to cancellation
once R is moderately large.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

__all__ = [
    "RateEstimate", "SpectralConfig", "SpectralConvergenceError", "ContainmentBound",
    "RateTable", "kushner_rate", "asymptotic_rate", "sturm_liouville_rate", "grid",
    "tridiagonal", "containment_lower_bound", "rate_table", "ou_rate",
]

METHODS = ("kushner", "spectral", "asymptotic", "mc-fit")
MAX_ITER = 500
RTOL = 1e-12
BOUND_LABEL = "guaranteed lower bound"
ASYMPTOTIC_LABEL = "asymptotic approximation, recommended T >= 5"
SMALL_R_LABEL = "not a bound: the Kushner rate exceeds the true rate for normalized R < 1"


class SpectralConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class RateEstimate:
    mu: float
    method: str
    stderr: float | None = None
    R: float | None = None
    lower_bound: bool = False  # mc-fit only: some p_hat was 0, mu is a lower bound
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown rate method {self.method!r}")

    def to_dict(self) -> dict:
        d = {"mu": self.mu, "method": self.method, "stderr": self.stderr, "R": self.R}
        if self.method == "mc-fit":
            d["lower_bound"] = self.lower_bound
        return d


@dataclass(frozen=True)
class SpectralConfig:
    n_grid: int = 4001
    refinement: int = 2

    def __post_init__(self):
        if int(self.n_grid) != self.n_grid or self.n_grid < 3 or self.n_grid % 2 == 0:
            raise ValueError(f"n_grid must be an odd integer >= 3, got {self.n_grid!r}")
        if int(self.refinement) != self.refinement or self.refinement < 0:
            raise ValueError(f"refinement must be a non-negative integer, got {self.refinement!r}")


def kushner_rate(R: float) -> RateEstimate:
    """mu_K(R) = 2 / R^2."""
    if not R > 0:
        raise ValueError("R must be positive")
    return RateEstimate(2.0 / (R * R), "kushner", 0.0, R)


def asymptotic_rate(R: float) -> RateEstimate:
    """Large-R equivalent R / sqrt(2 pi) * exp(-R^2 / 2)."""
    if not R > 0:
        raise ValueError("R must be positive")
    return RateEstimate(R / math.sqrt(2.0 * math.pi) * math.exp(-0.5 * R * R), "asymptotic", None, R)


def _weight(x, weight):
    return np.exp(-0.5 * x * x) if weight == "gauss" else np.ones_like(x)


def grid(R: float, n: int, weight: str = "gauss", half: bool = False):
    """Nodes, node weights, half-point weights and spacing.

    Full domain: n interior nodes of [-R, R].  Half domain: nodes 0, h, ...
    on [0, R) with n = number of nodes (the wall node is excluded).
    """
    if half:
        h = R / n
        x = h * np.arange(n)
        xh = h * (np.arange(n) + 0.5)
    else:
        h = 2.0 * R / (n + 1)
        x = -R + h * np.arange(1, n + 1)
        xh = -R + h * (np.arange(n + 1) + 0.5)
    return x, _weight(x, weight), _weight(xh, weight), h


def tridiagonal(R: float, n: int, weight: str = "gauss"):
    """(diag, offdiag, node weights) of the symmetric stiffness matrix L in L y = nu W y."""
    x, w, wh, h = grid(R, n, weight)
    diag = (wh[:-1] + wh[1:]) / (h * h)
    off = -wh[1:-1] / (h * h)
    return diag, off, w


def _inverse_iteration(R, n, weight, half):
    x, w, wh, h = grid(R, n, weight, half)
    vol = np.ones(n)
    if half:
        vol[0] = 0.5  # node 0 owns half a control volume
        solve = kernels.flux_solve_neumann
    else:
        solve = kernels.flux_solve_dirichlet
    L = 2.0 * R if not half else R
    y = np.cos(0.5 * math.pi * x / (L / (2.0 if not half else 1.0)))
    nu_old = math.inf
    for it in range(1, MAX_ITER + 1):
        q, y = solve(wh, vol * w * y, h)
        nu = float(np.sum(q * q / wh) / np.sum(vol * w * y * y))
        y = y / np.max(np.abs(y))
        if abs(nu - nu_old) <= RTOL * abs(nu):
            return nu, x, y, it
        nu_old = nu
    raise SpectralConvergenceError(
        f"inverse iteration did not converge in {MAX_ITER} iterations (R={R}, n={n})")


def sturm_liouville_rate(R: float, cfg: SpectralConfig | None = None, weight: str = "gauss",
                         half_domain: bool = False, return_eigenvector: bool = False):
    """Smallest Dirichlet eigenvalue of y'' - x y' on [-R, R].

    ``weight="unit"`` drops the drift term (y'' = -nu y), a check against
    (pi / 2R)^2.  ``half_domain`` solves on [0, R] with zero flux at 0, which
    is the same discrete problem for the even ground state.  The estimate is
    Richardson-extrapolated over ``cfg.refinement`` grid halvings and the
    stderr is the change made by the last extrapolation column.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    if weight not in ("gauss", "unit"):
        raise ValueError(f"weight must be 'gauss' or 'unit', got {weight!r}")
    cfg = cfg or SpectralConfig()
    levels = []
    vec = None
    n = cfg.n_grid
    iters = []
    for m in range(cfg.refinement + 1):
        nodes = (n + 1) // 2 if half_domain else n
        nu, x, y, it = _inverse_iteration(R, nodes, weight, half_domain)
        levels.append(nu)
        iters.append(it)
        if m == 0:
            vec = (x, y)
        n = 2 * n + 1
    table = [[v] for v in levels]
    for m in range(1, len(levels)):
        for j in range(1, m + 1):
            prev, low = table[m][j - 1], table[m - 1][j - 1]
            table[m].append(prev + (prev - low) / (4.0 ** j - 1.0))
    mu = table[-1][-1]
    stderr = abs(table[-1][-1] - table[-2][-1]) if len(table) > 1 else None
    est = RateEstimate(mu, "spectral", stderr, R,
                       meta={"levels": levels, "iterations": iters, "n_grid": cfg.n_grid,
                             "refinement": cfg.refinement, "weight": weight,
                             "half_domain": half_domain})
    if return_eigenvector:
        return est, vec
    return est


@dataclass(frozen=True)
class ContainmentBound:
    value: float
    method: str
    guaranteed: bool
    label: str

    def __float__(self):
        return self.value

    def to_dict(self) -> dict:
        return {"value": self.value, "method": self.method,
                "guaranteed": self.guaranteed, "label": self.label}


def containment_lower_bound(rate: RateEstimate, T: float) -> ContainmentBound:
    """exp(-mu T).  Only the Kushner rate gives a guaranteed bound.

    Below normalized radius 1 the Kushner rate 2/R^2 is smaller than mu_D
    (they meet at R = 1), so exp(-mu_K T) overshoots for large T there.
    """
    if not T >= 0:
        raise ValueError("T must be non-negative")
    if rate.method != "kushner":
        return ContainmentBound(math.exp(-rate.mu * T), rate.method, False, ASYMPTOTIC_LABEL)
    Rn = rate.meta.get("R_normalized", rate.R)
    ok = Rn is None or Rn >= 1.0
    return ContainmentBound(math.exp(-rate.mu * T), rate.method, ok,
                            BOUND_LABEL if ok else SMALL_R_LABEL)


def ou_rate(lam: float, sigma: float, R: float, method: str = "spectral",
            cfg: SpectralConfig | None = None) -> RateEstimate:
    """Rate for dX = -lam X dt + sigma dB on [-R, R].

    Y(s) = c X(s / lam) with c = sqrt(2 lam) / sigma is the normalized
    process, so mu = lam * mu_D(R c).  The Kushner rate becomes sigma^2/R^2.
    """
    if not (lam > 0 and sigma > 0 and R > 0):
        raise ValueError("lam, sigma and R must be positive")
    Rn = R * math.sqrt(2.0 * lam) / sigma
    if method == "kushner":
        base = kushner_rate(Rn)
    elif method == "asymptotic":
        base = asymptotic_rate(Rn)
    elif method == "spectral":
        base = sturm_liouville_rate(Rn, cfg)
    else:
        raise ValueError(f"unknown method {method!r}")
    se = None if base.stderr is None else lam * base.stderr
    return RateEstimate(lam * base.mu, base.method, se, R,
                        meta={"lambda": lam, "sigma": sigma, "R_normalized": Rn})


@dataclass
class RateTable:
    rows: list  # (R, mu_kushner, mu_spectral, mu_asymptotic, status)

    HEADER = "R,mu_kushner,mu_spectral,mu_asymptotic"

    def column(self, name: str) -> np.ndarray:
        i = ["R", "mu_kushner", "mu_spectral", "mu_asymptotic"].index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.HEADER + "\n")
        for r in self.rows:
            buf.write(",".join(repr(float(v)) for v in r[:4]) + "\n")
        return buf.getvalue()


def rate_table(radii, cfg: SpectralConfig | None = None) -> RateTable:
    """Kushner, spectral and asymptotic rates per radius; a failed solve gives nan + status."""
    radii = list(radii)
    if not radii or any(not r > 0 for r in radii):
        raise ValueError("radii must be a non-empty list of positive numbers")
    rows = []
    for R in radii:
        status = "ok"
        try:
            mu_s = sturm_liouville_rate(R, cfg).mu
        except SpectralConvergenceError as e:
            mu_s, status = math.nan, f"spectral failed: {e}"
        rows.append((float(R), kushner_rate(R).mu, mu_s, asymptotic_rate(R).mu, status))
    return RateTable(rows)
