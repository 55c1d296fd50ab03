"""Local Gaussian statistics and the uncertainty gate driven by their conditioning.

Covariances use population (1/|N|) normalization. Before inversion or
eigen-analysis each covariance is regularized as

    Sigma' = Sigma + eps * max(trace(Sigma) / 3, floor) * I

which keeps degenerate (single-point, collinear, coplanar) neighborhoods
finite while staying scale-aware.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import expit

from .video import Neighborhood

EPSILON_REG = 1e-6
COVARIANCE_FLOOR = 1e-9

# Closed-form eigenvalues lose accuracy as |r| -> 1 (acos is steep there).
_DEGENERATE_R = 1.0 - 1e-6


class DomainError(ValueError):
    """Raised when an operation receives inputs outside its domain."""


@dataclass(frozen=True)
class GatingConfig:
    """Parameters of the gate alpha = logistic(sharpness * (threshold - ln cond))."""

    threshold: float = math.log(100.0)
    sharpness: float = 1.0
    epsilon_reg: float = EPSILON_REG
    floor: float = COVARIANCE_FLOOR

    def __post_init__(self):
        if not self.sharpness > 0:
            raise DomainError(f"sharpness must be positive, got {self.sharpness}")
        if not self.epsilon_reg > 0:
            raise DomainError(f"epsilon_reg must be positive, got {self.epsilon_reg}")
        if not self.floor > 0:
            raise DomainError(f"floor must be positive, got {self.floor}")


@dataclass
class LocalGaussian:
    mean: np.ndarray
    covariance: np.ndarray
    regularized: np.ndarray
    eigenvalues: np.ndarray
    condition_number: float
    member_count: int

    def precision(self) -> np.ndarray:
        """Inverse of the regularized covariance."""
        return np.linalg.inv(self.regularized)


def population_stats(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two-pass population mean and covariance of an (n, 3) array."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DomainError("need a non-empty (n, 3) point array")
    mu = points.mean(axis=0)
    c = points - mu
    return mu, (c.T @ c) / points.shape[0]


def regularize(cov: np.ndarray, epsilon: float = EPSILON_REG,
               floor: float = COVARIANCE_FLOOR) -> np.ndarray:
    """Add the scale-aware ridge to one (3, 3) or many (..., 3, 3) covariances."""
    cov = np.asarray(cov, dtype=np.float64)
    scale = np.maximum(np.trace(cov, axis1=-2, axis2=-1) / 3.0, floor)
    return cov + (epsilon * scale)[..., None, None] * np.eye(3)


def symmetric_eigvals(a: np.ndarray) -> np.ndarray:
    """Eigenvalues of symmetric 3x3 matrices, sorted descending.

    Uses the trigonometric closed form; matrices whose discriminant is close
    to degenerate (two nearly equal eigenvalues) go through LAPACK instead.
    Accepts (3, 3) or (..., 3, 3).
    """
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim == 2
    m = a.reshape(-1, 3, 3)
    out = np.empty((m.shape[0], 3))

    p1 = m[:, 0, 1] ** 2 + m[:, 0, 2] ** 2 + m[:, 1, 2] ** 2
    diag = np.diagonal(m, axis1=1, axis2=2)
    is_diag = p1 == 0.0
    out[is_diag] = -np.sort(-diag[is_diag], axis=1)

    gen = ~is_diag
    if np.any(gen):
        mg, dg = m[gen], diag[gen]
        q = dg.sum(axis=1) / 3.0
        p2 = ((dg - q[:, None]) ** 2).sum(axis=1) + 2.0 * p1[gen]
        p = np.sqrt(p2 / 6.0)
        b = (mg - q[:, None, None] * np.eye(3)) / p[:, None, None]
        r = np.linalg.det(b) / 2.0
        phi = np.arccos(np.clip(r, -1.0, 1.0)) / 3.0
        e1 = q + 2.0 * p * np.cos(phi)
        e3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
        e2 = 3.0 * q - e1 - e3
        vals = np.stack([e1, e2, e3], axis=1)
        bad = np.abs(r) > _DEGENERATE_R
        if np.any(bad):
            vals[bad] = np.linalg.eigvalsh(mg[bad])[:, ::-1]
        out[gen] = -np.sort(-vals, axis=1)
    return out[0] if single else out.reshape(a.shape[:-1])


def _neighborhood_points(source) -> np.ndarray:
    if isinstance(source, Neighborhood):
        return source.positions
    return np.asarray(source, dtype=np.float64).reshape(-1, 3)


def estimate_gaussian(source: Union[Neighborhood, np.ndarray],
                      cfg: GatingConfig = GatingConfig()) -> LocalGaussian:
    """Fit the local Gaussian of a neighborhood (or a raw (n, 3) point array)."""
    pts = _neighborhood_points(source)
    if pts.shape[0] == 0:
        raise DomainError("cannot estimate a Gaussian from an empty neighborhood")
    mu, cov = population_stats(pts)
    reg = regularize(cov, cfg.epsilon_reg, cfg.floor)
    eig = symmetric_eigvals(reg)
    return LocalGaussian(mu, cov, reg, eig, float(_cond_from_eig(eig)), pts.shape[0])


def _cond_from_eig(eig: np.ndarray) -> np.ndarray:
    return np.maximum(eig[..., 0] / eig[..., 2], 1.0)


def condition_number(g: Union[LocalGaussian, np.ndarray]) -> float:
    """lambda_max / lambda_min of the regularized covariance (or of a given SPD matrix)."""
    mat = g.regularized if isinstance(g, LocalGaussian) else np.asarray(g, dtype=np.float64)
    eig = symmetric_eigvals(mat)
    if np.any(eig[..., 2] <= 0):
        raise DomainError("matrix is not positive definite")
    cond = _cond_from_eig(eig)
    return float(cond) if np.ndim(cond) == 0 else cond


def gating_alpha(cond, cfg: GatingConfig = GatingConfig()):
    """Gate value in [0, 1]; strictly decreasing in the condition number."""
    c = np.asarray(cond, dtype=np.float64)
    if np.any(c < 1.0):
        raise DomainError("condition number must be >= 1")
    alpha = expit(cfg.sharpness * (cfg.threshold - np.log(c)))
    return float(alpha) if alpha.ndim == 0 else alpha


def gate_features(f, f_robust, alpha):
    """Convex blend ``alpha * f + (1 - alpha) * f_robust``.

    ``alpha`` may be a scalar or one value per row. The result is clipped to
    the componentwise hull of the two inputs so rounding never escapes it.
    """
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(f_robust, dtype=np.float64)
    if f.shape != g.shape:
        raise DomainError(f"dimension mismatch: {f.shape} vs {g.shape}")
    a = np.asarray(alpha, dtype=np.float64)
    if np.any((a < 0) | (a > 1)):
        raise DomainError("alpha must lie in [0, 1]")
    if a.ndim and f.ndim > 1:
        a = a[..., None]
    out = a * f + (1.0 - a) * g
    return np.clip(out, np.minimum(f, g), np.maximum(f, g))
