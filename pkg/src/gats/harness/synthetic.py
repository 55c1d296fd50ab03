"""Continuous trajectories, shape templates, frame sampling, and corruption.

All randomness goes through ``numpy.random.default_rng(seed)`` (PCG64), so a
seed fully determines every generated video.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..gaussian import DomainError
from ..video import Frame, PointCloudVideo

TRAJECTORY_KINDS = ("constant_velocity", "quadratic", "sinusoidal")
TEMPLATE_KINDS = ("ball", "sphere", "plane", "blob")
DT_CONVENTIONS = ("inclusive", "exclusive")


def _vec(x) -> np.ndarray:
    return np.broadcast_to(np.asarray(x, dtype=np.float64), (3,)).copy()


@dataclass(frozen=True)
class Trajectory:
    """Closed-form motion x(t) on [0, duration].

    constant_velocity: origin + v t
    quadratic:         origin + v t + a t^2 / 2
    sinusoidal:        origin + amplitude * sin(omega t + phase)
    """

    kind: str = "constant_velocity"
    duration: float = 1.0
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))
    amplitude: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_frequency: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise DomainError(f"unknown trajectory kind {self.kind!r}")
        if not self.duration > 0:
            raise DomainError(f"duration must be positive, got {self.duration}")
        for name in ("origin", "velocity", "acceleration", "amplitude"):
            object.__setattr__(self, name, _vec(getattr(self, name)))

    @classmethod
    def constant(cls, velocity, duration: float = 1.0, origin=0.0) -> "Trajectory":
        return cls("constant_velocity", duration, origin=origin, velocity=velocity)

    @classmethod
    def quadratic(cls, velocity, acceleration, duration: float = 1.0, origin=0.0) -> "Trajectory":
        return cls("quadratic", duration, origin=origin, velocity=velocity, acceleration=acceleration)

    @classmethod
    def sinusoidal(cls, amplitude, angular_frequency, phase=0.0, duration: float = 1.0,
                   origin=0.0) -> "Trajectory":
        return cls("sinusoidal", duration, origin=origin, amplitude=amplitude,
                   angular_frequency=angular_frequency, phase=phase)

    def position(self, t):
        t = np.asarray(t, dtype=np.float64)[..., None]
        if self.kind == "constant_velocity":
            return self.origin + self.velocity * t
        if self.kind == "quadratic":
            return self.origin + self.velocity * t + 0.5 * self.acceleration * t * t
        return self.origin + self.amplitude * np.sin(self.angular_frequency * t + self.phase)

    def velocity_at(self, t):
        t = np.asarray(t, dtype=np.float64)[..., None]
        if self.kind == "constant_velocity":
            return self.velocity + 0.0 * t
        if self.kind == "quadratic":
            return self.velocity + self.acceleration * t
        w = self.angular_frequency
        return self.amplitude * w * np.cos(w * t + self.phase)

    def acceleration_at(self, t):
        t = np.asarray(t, dtype=np.float64)[..., None]
        if self.kind == "constant_velocity":
            return 0.0 * t + np.zeros(3)
        if self.kind == "quadratic":
            return self.acceleration + 0.0 * t
        w = self.angular_frequency
        return -self.amplitude * w * w * np.sin(w * t + self.phase)


def make_template(kind: str = "ball", n: int = 2048, seed: int = 0) -> np.ndarray:
    """Random (n, 3) shape centred on its centroid with unit bounding radius.

    ball: solid ball; sphere: spherical shell; plane: flat unit square;
    blob: anisotropic Gaussian with axis scales (1, 0.5, 0.25).
    """
    if kind not in TEMPLATE_KINDS:
        raise DomainError(f"unknown template {kind!r}")
    if n < 1:
        raise DomainError("template needs at least one point")
    rng = np.random.default_rng(seed)
    if kind in ("ball", "sphere"):
        d = rng.standard_normal((n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = rng.random(n) ** (1.0 / 3.0) if kind == "ball" else np.ones(n)
        pts = d * r[:, None]
    elif kind == "plane":
        pts = np.column_stack([rng.uniform(-1, 1, n), rng.uniform(-1, 1, n), np.zeros(n)])
    else:
        pts = rng.standard_normal((n, 3)) * np.array([1.0, 0.5, 0.25])
    pts = pts - pts.mean(axis=0)
    radius = np.linalg.norm(pts, axis=1).max()
    return pts / radius if radius > 0 else pts


def frame_interval(duration: float, frame_count: int, convention: str = "inclusive") -> float:
    """``T/(F-1)`` when both segment endpoints are frames, ``T/F`` otherwise."""
    if convention not in DT_CONVENTIONS:
        raise DomainError(f"unknown dt convention {convention!r}")
    return duration / (frame_count - 1) if convention == "inclusive" else duration / frame_count


def sample_video(traj: Trajectory, template: np.ndarray, frame_count: int, seed: int = 0,
                 feature_dim: int = 0, dt_convention: str = "inclusive") -> PointCloudVideo:
    """Rigidly translate ``template`` along ``traj`` and sample ``frame_count`` frames.

    Frame t sits at time ``t * dt``. Point i keeps index i in every frame, and
    its features (seeded, when ``feature_dim`` > 0) are the same in every frame.
    """
    if frame_count < 2:
        raise DomainError(f"need at least 2 frames, got {frame_count}")
    template = np.asarray(template, dtype=np.float64)
    dt = frame_interval(traj.duration, frame_count, dt_convention)
    feats = None
    if feature_dim > 0:
        feats = np.random.default_rng(seed).standard_normal((template.shape[0], feature_dim))
    times = np.arange(frame_count) * dt
    frames = [Frame(template + traj.position(t), None if feats is None else feats.copy())
              for t in times]
    return PointCloudVideo(frames, dt, segment_duration=traj.duration)


@dataclass(frozen=True)
class CorruptionSpec:
    """Stressors applied in order: noise, random drop, occlusion, density thinning.

    ``occlusion_halfspace`` is ``(normal, offset)``; points with
    ``normal . x > offset`` are removed. ``density_gradient`` is
    ``(axis, min_keep)``: keep probability falls linearly from 1 at the low end
    of the axis to ``min_keep`` at the high end.
    """

    noise_sigma: float = 0.0
    drop_fraction: float = 0.0
    occlusion_halfspace: Optional[tuple] = None
    density_gradient: Optional[tuple] = None

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be non-negative")
        if not 0 <= self.drop_fraction < 1:
            raise DomainError("drop_fraction must lie in [0, 1)")
        if self.density_gradient is not None:
            axis, keep = self.density_gradient
            if axis not in (0, 1, 2) or not 0 <= keep <= 1:
                raise DomainError("density_gradient needs axis in {0,1,2} and min_keep in [0,1]")

    @property
    def is_identity(self) -> bool:
        return (self.noise_sigma == 0 and self.drop_fraction == 0
                and self.occlusion_halfspace is None and self.density_gradient is None)


def corrupt(video: PointCloudVideo, spec: CorruptionSpec, seed: int = 0,
            return_kept: bool = False):
    """Apply ``spec`` to every frame; optionally also return surviving indices per frame."""
    rng = np.random.default_rng(seed)
    frames, kept = [], []
    for t, frame in enumerate(video.frames):
        pos = frame.positions.copy()
        n = pos.shape[0]
        if spec.noise_sigma > 0:
            pos = pos + rng.normal(0.0, spec.noise_sigma, size=pos.shape)
        keep = np.ones(n, dtype=bool)
        if spec.drop_fraction > 0:
            keep &= rng.random(n) >= spec.drop_fraction
        if spec.occlusion_halfspace is not None:
            normal, offset = spec.occlusion_halfspace
            keep &= pos @ _vec(normal) <= offset
        if spec.density_gradient is not None:
            axis, min_keep = spec.density_gradient
            x = pos[:, axis]
            span = x.max() - x.min()
            frac = (x - x.min()) / span if span > 0 else np.zeros(n)
            keep &= rng.random(n) < 1.0 - (1.0 - min_keep) * frac
        idx = np.flatnonzero(keep)
        if idx.size == 0:
            raise DomainError(f"corruption left frame {t} empty")
        feats = None if frame.features is None else frame.features[idx]
        frames.append(Frame(pos[idx], feats))
        kept.append(idx)
    out = PointCloudVideo(frames, video.frame_interval, video.segment_duration)
    return (out, kept) if return_kept else out
