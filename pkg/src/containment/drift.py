"""Drift fields, noise and containment-query types, plus the R_x rotation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .expr import ExprDomainError, Program, compile_expr, eval_program, evaluate, parse_expr

__all__ = [
    "DriftSpec", "NoiseSpec", "ContainmentQuery", "DimensionError",
    "eval_drift", "rotation_to_e1", "noise_sigma",
    "KIND_OU", "KIND_PIECEWISE", "KIND_EXPR", "KIND_RADIAL",
]

KIND_OU, KIND_PIECEWISE, KIND_EXPR, KIND_RADIAL = 0, 1, 2, 3
_FAMILIES = {"ou": KIND_OU, "piecewise": KIND_PIECEWISE,
             "expression": KIND_EXPR, "radial": KIND_RADIAL}


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class DriftSpec:
    """A drift field f on R^d.

    Use the constructors :meth:`ou`, :meth:`piecewise`, :meth:`expression`
    and :meth:`radial` rather than filling the fields by hand.
    """

    family: str
    dimension: int = 1
    lam: float = 0.0
    lam_left: float = 0.0
    lam_right: float = 0.0
    source: str = ""
    _program: Program | None = field(default=None, compare=False, repr=False)
    _node: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown drift family {self.family!r}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dimension!r}")
        if self.family in ("piecewise", "expression") and self.dimension != 1:
            raise DimensionError(f"{self.family} drifts are one-dimensional")
        for name in ("lam", "lam_left", "lam_right"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.family in ("expression", "radial"):
            var = "x" if self.family == "expression" else "r"
            node = parse_expr(self.source, var)
            object.__setattr__(self, "_node", node)
            object.__setattr__(self, "_program", compile_expr(node))

    @classmethod
    def ou(cls, lam: float, dimension: int = 1) -> "DriftSpec":
        """Linear pull f(x) = -lam * x."""
        return cls("ou", dimension, lam=float(lam))

    @classmethod
    def piecewise(cls, lam_left: float, lam_right: float) -> "DriftSpec":
        """f(x) = -lam_right*x for x > 0 and -lam_left*x for x < 0."""
        return cls("piecewise", 1, lam_left=float(lam_left), lam_right=float(lam_right))

    @classmethod
    def expression(cls, source: str) -> "DriftSpec":
        return cls("expression", 1, source=source)

    @classmethod
    def radial(cls, source: str, dimension: int = 2) -> "DriftSpec":
        """f(x) = rho(|x|) x/|x| with rho given as an expression in ``r``."""
        return cls("radial", dimension, source=source)

    @classmethod
    def from_mapping(cls, m: Mapping[str, object]) -> "DriftSpec":
        """Build from config keys: family, dimension, lambda, lambda_left, lambda_right, source."""
        family = str(m.get("family", "")).strip().strip('"').strip("'")
        dim = int(m.get("dimension", 2 if family == "radial" else 1))
        if family == "ou":
            return cls.ou(float(m["lambda"]), dim)
        if family == "piecewise":
            return cls.piecewise(float(m["lambda_left"]), float(m["lambda_right"]))
        if family == "expression":
            return cls.expression(str(m["source"]).strip().strip('"'))
        if family == "radial":
            return cls.radial(str(m["source"]).strip().strip('"'), dim)
        raise ValueError(f"unknown drift family {family!r}")

    def to_dict(self) -> dict:
        d = {"family": self.family, "dimension": self.dimension}
        if self.family == "ou":
            d["lambda"] = self.lam
        elif self.family == "piecewise":
            d["lambda_left"] = self.lam_left
            d["lambda_right"] = self.lam_right
        else:
            d["source"] = self.source
        return d

    @property
    def kind(self) -> int:
        return _FAMILIES[self.family]

    @property
    def max_pull(self) -> float | None:
        """Largest pull-strength parameter of a built-in family, else None."""
        if self.family == "ou":
            return abs(self.lam)
        if self.family == "piecewise":
            return max(abs(self.lam_left), abs(self.lam_right))
        return None

    def kernel_args(self):
        """(kind, params, code, consts) as consumed by the simulation kernels."""
        params = np.array([self.lam, self.lam_left, self.lam_right], dtype=np.float64)
        if self._program is None:
            return self.kind, params, np.zeros((0, 2), np.int32), np.zeros(0)
        return self.kind, params, self._program.code, self._program.consts

    def batch(self, points) -> np.ndarray:
        """Evaluate at an (n, d) array of points; domain errors give nan rows."""
        X = np.asarray(points, dtype=np.float64).reshape(-1, self.dimension)
        if self.family == "ou":
            return -self.lam * X
        if self.family == "piecewise":
            x = X[:, 0]
            return np.where(x > 0, -self.lam_right * x,
                            np.where(x < 0, -self.lam_left * x, 0.0))[:, None]
        if self.family == "expression":
            return eval_program(self._program, X[:, 0])[:, None]
        r = np.linalg.norm(X, axis=1)
        rho = eval_program(self._program, r)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = (rho / np.where(r > 0, r, 1.0))[:, None] * X
        out[r == 0] = 0.0
        out[np.isnan(rho) & (r > 0)] = np.nan
        return out

    def __call__(self, x):
        return eval_drift(self, x)


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"noise strength must be positive, got {self.sigma!r}")


def noise_sigma(noise) -> float:
    """Accept a NoiseSpec or a bare float; a bare 0.0 gives the deterministic limit."""
    if isinstance(noise, NoiseSpec):
        return noise.sigma
    s = float(noise)
    if not (math.isfinite(s) and s >= 0):
        raise ValueError(f"noise strength must be >= 0, got {s!r}")
    return s


@dataclass(frozen=True)
class ContainmentQuery:
    R: float
    T: float
    K: float

    def __post_init__(self):
        if not (0 < self.R <= self.K):
            raise ValueError(f"need 0 < R <= K, got R={self.R}, K={self.K}")
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")


def eval_drift(spec: DriftSpec, x):
    """f(x).  A scalar argument on a 1-d drift returns a float.

    Raises :class:`ExprDomainError` when an expression leaves its domain.
    """
    scalar = np.ndim(x) == 0
    v = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if v.shape != (spec.dimension,):
        raise DimensionError(f"state has shape {v.shape}, drift dimension is {spec.dimension}")
    if spec.family in ("ou", "piecewise"):
        out = spec.batch(v)[0]
    elif spec.family == "expression":
        out = np.array([evaluate(spec._node, float(v[0]))])
    else:
        r = float(np.linalg.norm(v))
        out = np.zeros_like(v) if r == 0 else evaluate(spec._node, r) * v / r
    if not np.all(np.isfinite(out)):
        raise ExprDomainError(f"drift is not finite at {v}")
    return float(out[0]) if scalar and spec.dimension == 1 else out


def rotation_to_e1(x) -> np.ndarray:
    """Proper rotation R with R @ (x/|x|) = e1; identity when x == 0.

    d = 2 is a Givens rotation.  For d >= 3 a Householder reflection sends
    x/|x| to +-e1 and a coordinate flip restores det = +1; the branch on the
    sign of the first component keeps the reflection well conditioned.
    """
    v = np.asarray(x, dtype=np.float64).ravel()
    d = v.size
    if d < 2:
        raise DimensionError("rotation_to_e1 needs d >= 2")
    r = np.linalg.norm(v)
    if r == 0:
        return np.eye(d)
    u = v / r
    if d == 2:
        c, s = u
        return np.array([[c, s], [-s, c]])
    w = u.copy()
    flip = np.ones(d)
    if u[0] <= 0:
        w[0] -= 1.0
        flip[-1] = -1.0
    else:
        w[0] += 1.0
        flip[0] = -1.0
    H = np.eye(d) - 2.0 * np.outer(w, w) / (w @ w)
    return flip[:, None] * H
