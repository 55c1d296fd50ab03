"""Uncertainty-guided Gaussian convolution (UGGC).

For each center the members of its spatio-temporal window are weighted by

    w(x) = k_sigma(x - mu) * exp(-1/2 (x - mu)^T Sigma'^-1 (x - mu))

and aggregated as a normalized weighted mean of member features, once per
kernel scale sigma = m * r. The scale m = 1 gives the standard feature, the
largest scale gives the robust feature, and the two are blended by the
condition-number gate. All scales share one member set (the window at the
query radius) and differ only in sigma.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .gaussian import (
    DomainError,
    GatingConfig,
    LocalGaussian,
    gate_features,
    gating_alpha,
    regularize,
    symmetric_eigvals,
)
from .video import Point4D, PointCloudVideo, QueryError, batch_neighborhoods, query_neighborhood

KERNEL_FORMS = ("gaussian_rbf", "inverse_multiquadric")

# Upper bound on members processed per vectorized chunk of centers.
_CHUNK_MEMBERS = 1 << 21


@dataclass(frozen=True)
class KernelSpec:
    base_radius: float = 0.3
    scale_multipliers: tuple[float, ...] = (0.5, 1.0, 3.0)
    kernel_form: str = "gaussian_rbf"
    # Window radius for member selection; defaults to base_radius.
    query_radius: Optional[float] = None
    # "gated" blends standard/robust scales; "concat" stacks every scale.
    fusion: str = "gated"

    def __post_init__(self):
        mult = tuple(float(m) for m in self.scale_multipliers)
        if not self.base_radius > 0:
            raise DomainError(f"base_radius must be positive, got {self.base_radius}")
        if not mult or any(m <= 0 for m in mult) or list(mult) != sorted(mult):
            raise DomainError("scale multipliers must be positive and sorted ascending")
        if self.kernel_form not in KERNEL_FORMS:
            raise DomainError(f"unknown kernel form {self.kernel_form!r}")
        if self.fusion not in ("gated", "concat"):
            raise DomainError(f"unknown scale fusion {self.fusion!r}")
        object.__setattr__(self, "scale_multipliers", mult)

    @property
    def sigmas(self) -> np.ndarray:
        return self.base_radius * np.asarray(self.scale_multipliers)

    @property
    def window_radius(self) -> float:
        return self.base_radius if self.query_radius is None else self.query_radius

    @property
    def standard_scale(self) -> int:
        mult = np.asarray(self.scale_multipliers)
        return int(np.argmin(np.abs(np.log(mult))))

    @property
    def robust_scale(self) -> int:
        return len(self.scale_multipliers) - 1


@dataclass
class UGGCOutput:
    feature: np.ndarray
    weights: np.ndarray
    alpha: float
    gaussian: LocalGaussian
    scale_features: np.ndarray
    members: np.ndarray = field(repr=False)
    fallback: bool = False


def geometric_kernel(sq_dist, sigma, form: str = "gaussian_rbf"):
    u = np.asarray(sq_dist, dtype=np.float64) / (sigma * sigma)
    if form == "gaussian_rbf":
        return np.exp(-0.5 * u)
    return 1.0 / np.sqrt(1.0 + u)


def _check_vec(x, name):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"non-finite {name}")
    return x


def gaussian_weight(x, g: LocalGaussian, kernel: KernelSpec, sigma: float) -> float:
    """Aggregation weight of position ``x`` under Gaussian ``g`` at scale ``sigma``."""
    x = _check_vec(x, "position").reshape(3)
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    d = x - g.mean
    maha = d @ np.linalg.solve(g.regularized, d)
    return float(geometric_kernel(d @ d, sigma, kernel.kernel_form) * np.exp(-0.5 * maha))


def gaussian_weight_grad(x, g: LocalGaussian, kernel: KernelSpec, sigma: float) -> np.ndarray:
    """Gradient of :func:`gaussian_weight` with respect to ``x``."""
    x = _check_vec(x, "position").reshape(3)
    d = x - g.mean
    w = gaussian_weight(x, g, kernel, sigma)
    prec_d = np.linalg.solve(g.regularized, d)
    if kernel.kernel_form == "gaussian_rbf":
        geo = -d / sigma**2
    else:
        geo = -d / (sigma**2 + d @ d)
    return w * (geo - prec_d)


def _default_features(video: PointCloudVideo, features) -> np.ndarray:
    if features is None:
        features = video.all_features()
        if features is None:
            features = video.all_positions()
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    if features.shape[0] != video.total_points:
        raise DomainError(
            f"need one feature row per point ({video.total_points}), got {features.shape[0]}"
        )
    if not np.all(np.isfinite(features)):
        raise DomainError("non-finite feature values")
    return features


@dataclass
class _Aggregate:
    means: np.ndarray
    cov: np.ndarray
    reg: np.ndarray
    eig: np.ndarray
    cond: np.ndarray
    alpha: np.ndarray
    scale_features: np.ndarray
    features: np.ndarray
    weights: np.ndarray
    fallback: np.ndarray


def _aggregate(pos: np.ndarray, feat: np.ndarray, indptr: np.ndarray,
               kernel: KernelSpec, gate: GatingConfig) -> _Aggregate:
    """Vectorized UGGC over CSR segments of member positions/features."""
    counts = np.diff(indptr)
    if np.any(counts == 0):
        raise DomainError("empty neighborhood")
    starts = indptr[:-1]
    seg = np.repeat(np.arange(counts.size), counts)
    n = counts[:, None].astype(np.float64)

    mu = np.add.reduceat(pos, starts, axis=0) / n
    c = pos - mu[seg]
    outer = (c[:, :, None] * c[:, None, :]).reshape(-1, 9)
    cov = (np.add.reduceat(outer, starts, axis=0) / n).reshape(-1, 3, 3)
    reg = regularize(cov, gate.epsilon_reg, gate.floor)
    eig = symmetric_eigvals(reg)
    cond = np.maximum(eig[:, 0] / eig[:, 2], 1.0)
    prec = np.linalg.inv(reg)

    maha = (c[:, :, None] * prec[seg] * c[:, None, :]).sum(axis=(1, 2))
    likelihood = np.exp(-0.5 * maha)
    sq = (c * c).sum(axis=1)

    n_scales = len(kernel.scale_multipliers)
    scale_feat = np.empty((counts.size, n_scales, feat.shape[1]))
    fallback = np.zeros(counts.size, dtype=bool)
    weights = None
    unweighted = None
    for j, sigma in enumerate(kernel.sigmas):
        w = geometric_kernel(sq, sigma, kernel.kernel_form) * likelihood
        wsum = np.add.reduceat(w, starts)
        fsum = np.add.reduceat(w[:, None] * feat, starts, axis=0)
        bad = ~(wsum > 0) | ~np.isfinite(wsum)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale_feat[:, j] = fsum / wsum[:, None]
        if np.any(bad):
            if unweighted is None:
                unweighted = np.add.reduceat(feat, starts, axis=0) / n
            scale_feat[bad, j] = unweighted[bad]
            fallback |= bad
        if j == kernel.standard_scale:
            weights = w

    alpha = gating_alpha(cond, gate)
    alpha = np.atleast_1d(alpha)
    if kernel.fusion == "concat":
        out = scale_feat.reshape(counts.size, -1)
    else:
        out = gate_features(scale_feat[:, kernel.standard_scale],
                            scale_feat[:, kernel.robust_scale], alpha)
    return _Aggregate(mu, cov, reg, eig, cond, alpha, scale_feat, out, weights, fallback)


def _gaussian_at(agg: _Aggregate, i: int, count: int) -> LocalGaussian:
    return LocalGaussian(agg.means[i], agg.cov[i], agg.reg[i], agg.eig[i],
                         float(agg.cond[i]), int(count))


def uggc_forward(video: PointCloudVideo, center: Point4D, features=None,
                 kernel: KernelSpec = KernelSpec(), temporal_radius: int = 1,
                 gate: GatingConfig = GatingConfig(), causal: bool = False) -> UGGCOutput:
    """UGGC feature of a single center.

    ``features`` holds one row per video point in frame-major order; when
    omitted, the video's own features are used, or its coordinates if it has
    none.
    """
    feats = _default_features(video, features)
    nb = query_neighborhood(video, center, kernel.window_radius, temporal_radius, causal)
    if nb.size == 0:
        raise QueryError("neighborhood is empty; the center is not a point of the video")
    gid = video.offsets[nb.frames] + nb.indices
    agg = _aggregate(nb.positions, feats[gid], np.array([0, nb.size]), kernel, gate)
    return UGGCOutput(agg.features[0], agg.weights, float(agg.alpha[0]),
                      _gaussian_at(agg, 0, nb.size), agg.scale_features[0], gid,
                      bool(agg.fallback[0]))


@dataclass
class UGGCBatch:
    """UGGC results for many centers, ordered by (frame, point index)."""

    centers: np.ndarray
    features: np.ndarray
    alpha: np.ndarray
    condition_number: np.ndarray
    means: np.ndarray
    covariance: np.ndarray
    regularized: np.ndarray
    eigenvalues: np.ndarray
    scale_features: np.ndarray
    indptr: np.ndarray
    members: np.ndarray
    weights: np.ndarray
    fallback: np.ndarray

    def __len__(self) -> int:
        return int(self.centers.size)

    def output(self, i: int) -> UGGCOutput:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        g = LocalGaussian(self.means[i], self.covariance[i], self.regularized[i],
                          self.eigenvalues[i], float(self.condition_number[i]), int(hi - lo))
        return UGGCOutput(self.features[i], self.weights[lo:hi], float(self.alpha[i]), g,
                          self.scale_features[i], self.members[lo:hi], bool(self.fallback[i]))


def uggc_forward_batch(video: PointCloudVideo, features=None, kernel: KernelSpec = KernelSpec(),
                       temporal_radius: int = 1, gate: GatingConfig = GatingConfig(),
                       centers: Optional[Sequence[int]] = None,
                       causal: bool = False) -> UGGCBatch:
    """UGGC over every point (or the given global point ids) of a video."""
    feats = _default_features(video, features)
    centers, indptr, members = batch_neighborhoods(video, kernel.window_radius,
                                                   temporal_radius, centers, causal)
    pos = video.all_positions()
    counts = np.diff(indptr)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        frame = video.frame_of_points()[centers[empty[0]]]
        raise QueryError(f"empty neighborhood at center {int(centers[empty[0]])} (frame {frame})")

    parts: list[_Aggregate] = []
    lo = 0
    while lo < centers.size:
        hi = int(np.searchsorted(indptr, indptr[lo] + _CHUNK_MEMBERS, side="right")) - 1
        hi = min(max(hi, lo + 1), centers.size)
        m = members[indptr[lo]:indptr[hi]]
        parts.append(_aggregate(pos[m], feats[m], indptr[lo:hi + 1] - indptr[lo], kernel, gate))
        lo = hi

    def cat(name):
        return np.concatenate([getattr(p, name) for p in parts], axis=0)

    return UGGCBatch(centers, cat("features"), cat("alpha"), cat("cond"), cat("means"),
                     cat("cov"), cat("reg"), cat("eig"), cat("scale_features"), indptr,
                     members, cat("weights"), cat("fallback"))


def euclidean_forward_batch(video: PointCloudVideo, features=None,
                            kernel: KernelSpec = KernelSpec(), temporal_radius: int = 1,
                            centers: Optional[Sequence[int]] = None) -> np.ndarray:
    """Baseline aggregation: geometric kernel on ``x - center`` only, at the base radius.

    Same windows as :func:`uggc_forward_batch`, no covariance and no gate.
    """
    feats = _default_features(video, features)
    centers, indptr, members = batch_neighborhoods(video, kernel.window_radius,
                                                   temporal_radius, centers)
    pos = video.all_positions()
    counts = np.diff(indptr)
    seg = np.repeat(np.arange(centers.size), counts)
    d = pos[members] - pos[centers][seg]
    w = geometric_kernel((d * d).sum(axis=1), kernel.base_radius, kernel.kernel_form)
    starts = indptr[:-1]
    wsum = np.add.reduceat(w, starts)
    return np.add.reduceat(w[:, None] * feats[members], starts, axis=0) / wsum[:, None]
