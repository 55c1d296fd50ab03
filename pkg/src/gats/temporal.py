"""Temporal scaling factor with the velocities and attention bias that depend on it.

Temporal distances are counted in frame indices. The factor
``s = dt / dt_ref`` turns a frame count into physical time measured in
reference intervals, so ``raw / s`` is displacement per reference interval
and does not depend on the frame rate. The reciprocal convention
``s = dt_ref / dt`` is available through ``convention="ref_over_dt"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gaussian import DomainError

CONVENTIONS = ("dt_over_ref", "ref_over_dt")
PHI_FORMS = ("linear", "log")


@dataclass(frozen=True)
class TemporalScale:
    s: float
    dt: Optional[float] = None
    dt_ref: Optional[float] = None
    provenance: str = "explicit"
    frame_count: Optional[int] = None
    segment_duration: Optional[float] = None
    fps: Optional[float] = None
    convention: str = "dt_over_ref"

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise DomainError(f"scaling factor must be positive and finite, got {self.s}")
        if self.convention not in CONVENTIONS:
            raise DomainError(f"unknown convention {self.convention!r}")

    @classmethod
    def explicit(cls, s: float) -> "TemporalScale":
        return cls(float(s))

    @classmethod
    def from_intervals(cls, dt: float, dt_ref: float,
                       convention: str = "dt_over_ref") -> "TemporalScale":
        _positive(dt=dt, dt_ref=dt_ref)
        s = dt / dt_ref if convention == "dt_over_ref" else dt_ref / dt
        return cls(s, dt, dt_ref, "explicit", convention=convention)

    def scaled_distance(self, frame_distance) -> np.ndarray:
        return self.s * np.abs(np.asarray(frame_distance, dtype=np.float64))


def _positive(**values) -> None:
    for name, v in values.items():
        if not (v > 0 and math.isfinite(v)):
            raise DomainError(f"{name} must be positive, got {v}")


def scale_from_frame_count(segment_duration: float, frame_count: int, dt_ref: float,
                           convention: str = "dt_over_ref") -> TemporalScale:
    """Scale for a segment of ``segment_duration`` seconds split into ``frame_count`` frames.

    ``dt = T_seg / F`` so that ``s * F = T_seg / dt_ref`` for every F.
    """
    if frame_count < 1:
        raise DomainError(f"frame count must be >= 1, got {frame_count}")
    _positive(segment_duration=segment_duration, dt_ref=dt_ref)
    dt = segment_duration / frame_count
    s = dt / dt_ref if convention == "dt_over_ref" else dt_ref / dt
    return TemporalScale(s, dt, dt_ref, "from_frame_count", frame_count=int(frame_count),
                         segment_duration=segment_duration, convention=convention)


def scale_from_fps(fps: float, dt_ref: float, convention: str = "dt_over_ref") -> TemporalScale:
    _positive(fps=fps, dt_ref=dt_ref)
    dt = 1.0 / fps
    s = 1.0 / (dt_ref * fps) if convention == "dt_over_ref" else dt_ref * fps
    return TemporalScale(s, dt, dt_ref, "from_fps", fps=fps, convention=convention)


@dataclass(frozen=True)
class VelocityEstimate:
    raw: np.ndarray
    normalized: np.ndarray
    frame_gap: int


def relative_velocity(x_t, x_t_plus, frame_gap: int, scale: TemporalScale) -> VelocityEstimate:
    """Displacement per frame (``raw``) and per reference interval (``normalized``).

    Works on single 3-vectors or (n, 3) arrays of corresponding points.
    """
    if frame_gap < 1:
        raise DomainError(f"frame gap must be >= 1, got {frame_gap}")
    a = np.asarray(x_t, dtype=np.float64)
    b = np.asarray(x_t_plus, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DomainError("non-finite position")
    raw = (b - a) / frame_gap
    return VelocityEstimate(raw, raw / scale.s, int(frame_gap))


def physical_velocity(estimate: VelocityEstimate, scale: TemporalScale) -> np.ndarray:
    """Velocity in scene units per second recovered from a normalized estimate."""
    if scale.dt_ref is None:
        raise DomainError("scale has no reference interval")
    if scale.convention == "dt_over_ref":
        return estimate.normalized / scale.dt_ref
    return estimate.normalized * scale.dt_ref / (scale.dt * scale.dt)


def scaled_temporal_radius(r_t: float, scale: TemporalScale) -> int:
    """``s * r_t`` rounded half-up to whole frames, never below one."""
    if not r_t > 0:
        raise DomainError(f"temporal radius must be positive, got {r_t}")
    return max(1, int(math.floor(scale.s * r_t + 0.5)))


@dataclass(frozen=True)
class PhiSpec:
    """Bias map on scaled temporal distance: ``-u`` (linear) or ``-ln(1 + u)`` (log)."""

    form: str = "linear"

    def __post_init__(self):
        if self.form not in PHI_FORMS:
            raise DomainError(f"unknown bias form {self.form!r}")

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        return -u if self.form == "linear" else -np.log1p(u)


def temporal_bias(frame_distance, scale: TemporalScale, phi: PhiSpec = PhiSpec()):
    """Bias ``Phi(s * |frame distance|)`` for one distance or an array of them."""
    d = np.asarray(frame_distance)
    if np.any(d < 0):
        raise DomainError("frame distance must be non-negative")
    out = phi(scale.scaled_distance(d))
    return float(out) if out.ndim == 0 else out


def bias_matrix(frames_q, frames_k, scale: TemporalScale, phi: PhiSpec = PhiSpec()) -> np.ndarray:
    """Bias for every (query, key) pair from their frame indices."""
    fq = np.asarray(frames_q)[:, None]
    fk = np.asarray(frames_k)[None, :]
    return phi(scale.scaled_distance(fq - fk))


def point_velocities(video, scale: TemporalScale, correspondence: str = "auto") -> np.ndarray:
    """Normalized velocity of every point, frame-major (total_points, 3).

    Forward differences to the next frame, backward on the last frame, zero
    for single-frame videos. ``correspondence="index"`` pairs point i with
    point i of the neighbouring frame (needs equal counts); ``"nearest"``
    pairs each point with its nearest neighbour there. ``"auto"`` picks
    index when all frames have the same size.
    """
    from scipy.spatial import cKDTree

    counts = video.counts
    if correspondence == "auto":
        correspondence = "index" if np.all(counts == counts[0]) else "nearest"
    if correspondence not in ("index", "nearest"):
        raise DomainError(f"unknown correspondence {correspondence!r}")
    if correspondence == "index" and not np.all(counts == counts[0]):
        raise DomainError("index correspondence needs equal point counts per frame")
    out = []
    n_frames = video.num_frames
    for t in range(n_frames):
        cur = video.frames[t].positions
        if n_frames == 1:
            out.append(np.zeros_like(cur))
            continue
        if t + 1 < n_frames:
            nxt = video.frames[t + 1].positions
            if correspondence == "nearest":
                nxt = nxt[cKDTree(nxt).query(cur)[1]]
            out.append(relative_velocity(cur, nxt, 1, scale).normalized)
        else:
            prv = video.frames[t - 1].positions
            if correspondence == "nearest":
                prv = prv[cKDTree(prv).query(cur)[1]]
            out.append(relative_velocity(prv, cur, 1, scale).normalized)
    return np.concatenate(out, axis=0)
