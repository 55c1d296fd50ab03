"""Point-cloud video data model and spatio-temporal neighborhood queries.

A video is an ordered list of frames; each frame holds an unordered set of
3D points with optional per-point feature vectors. Neighborhood windows are
cylinders: a Euclidean ball in space times a symmetric (or causal) window of
frame indices. Spatial search uses one KD-tree per frame keyed on xyz only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree


class QueryError(ValueError):
    """Raised for invalid neighborhood queries (empty video, bad frame, bad radius)."""


class VideoError(ValueError):
    """Raised when a video or frame violates the data-model invariants."""


@dataclass(frozen=True)
class Point4D:
    """A single point of a video.

    ``index`` is the point's position inside its frame when the point belongs
    to a video; free query positions leave it as ``None``.
    """

    position: np.ndarray
    frame_index: int
    feature: Optional[np.ndarray] = None
    index: Optional[int] = None

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise VideoError(f"non-finite point position {pos}")
        if self.frame_index < 0:
            raise VideoError(f"negative frame index {self.frame_index}")
        object.__setattr__(self, "position", pos)
        if self.feature is not None:
            object.__setattr__(self, "feature", np.asarray(self.feature, dtype=np.float64).reshape(-1))


@dataclass
class Frame:
    """One frame: ``positions`` is (N, 3), ``features`` is (N, d) or None."""

    positions: np.ndarray
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise VideoError(f"frame positions must be (N, 3), got {pos.shape}")
        if pos.shape[0] < 1:
            raise VideoError("a frame needs at least one point")
        if not np.all(np.isfinite(pos)):
            raise VideoError("frame contains non-finite coordinates")
        self.positions = pos
        if self.features is not None:
            feat = np.ascontiguousarray(self.features, dtype=np.float64)
            if feat.ndim == 1:
                feat = feat[:, None]
            if feat.shape[0] != pos.shape[0]:
                raise VideoError(
                    f"feature rows ({feat.shape[0]}) do not match point count ({pos.shape[0]})"
                )
            if not np.all(np.isfinite(feat)):
                raise VideoError("frame contains non-finite features")
            self.features = feat

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def feature_dim(self) -> int:
        return 0 if self.features is None else self.features.shape[1]


@dataclass
class PointCloudVideo:
    """Ordered frames sampled every ``frame_interval`` seconds.

    Frame indices are implicit (0..T-1, the list position). The spatial index
    is built lazily on first query and never mutated afterwards; mutate a
    video's arrays only before querying it.
    """

    frames: list[Frame]
    frame_interval: float
    segment_duration: Optional[float] = None
    _trees: Optional[list] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.frames = list(self.frames)
        if not self.frame_interval > 0 or not np.isfinite(self.frame_interval):
            raise VideoError(f"frame_interval must be positive, got {self.frame_interval}")
        dims = {f.feature_dim for f in self.frames}
        if len(dims) > 1:
            raise VideoError(f"frames disagree on feature dimension: {sorted(dims)}")

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def duration(self) -> float:
        if self.segment_duration is not None:
            return self.segment_duration
        return (self.num_frames - 1) * self.frame_interval

    @property
    def feature_dim(self) -> int:
        return self.frames[0].feature_dim if self.frames else 0

    @property
    def counts(self) -> np.ndarray:
        return np.array([f.count for f in self.frames], dtype=np.intp)

    @property
    def offsets(self) -> np.ndarray:
        """Global id of the first point of each frame in (frame, index) order."""
        return np.concatenate([[0], np.cumsum(self.counts)[:-1]]).astype(np.intp)

    @property
    def total_points(self) -> int:
        return int(self.counts.sum())

    def all_positions(self) -> np.ndarray:
        return np.concatenate([f.positions for f in self.frames], axis=0)

    def all_features(self) -> Optional[np.ndarray]:
        if self.feature_dim == 0:
            return None
        return np.concatenate([f.features for f in self.frames], axis=0)

    def frame_of_points(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_frames), self.counts)

    def point(self, frame_index: int, index: int) -> Point4D:
        frame = self.frames[frame_index]
        feat = None if frame.features is None else frame.features[index]
        return Point4D(frame.positions[index], frame_index, feat, index)

    def trees(self) -> list:
        if self._trees is None:
            self._trees = [cKDTree(f.positions) for f in self.frames]
        return self._trees

    def equals(self, other: "PointCloudVideo") -> bool:
        """Bit-exact equality of the data model (coordinates, features, timing)."""
        if self.num_frames != other.num_frames or self.frame_interval != other.frame_interval:
            return False
        for a, b in zip(self.frames, other.frames):
            if not np.array_equal(a.positions, b.positions):
                return False
            if (a.features is None) != (b.features is None):
                return False
            if a.features is not None and not np.array_equal(a.features, b.features):
                return False
        return True


@dataclass
class Neighborhood:
    """Members of a spatio-temporal window around ``center``.

    Members are stored column-wise and ordered canonically by ascending frame
    offset, then ascending point index.
    """

    center: Point4D
    frames: np.ndarray
    indices: np.ndarray
    positions: np.ndarray
    spatial_radius: float
    temporal_radius: int
    undersized: bool = False

    @property
    def offsets(self) -> np.ndarray:
        return self.frames - self.center.frame_index

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])

    def members(self) -> list[tuple[tuple[int, int], int]]:
        """Members as ``((frame, index), frame_offset)`` pairs."""
        return [((int(f), int(i)), int(o)) for f, i, o in zip(self.frames, self.indices, self.offsets)]


def frame_window(video: PointCloudVideo, frame_index: int, temporal_radius: int,
                 causal: bool = False) -> range:
    """Frames within ``temporal_radius`` of ``frame_index`` (past-only when ``causal``)."""
    lo = max(0, frame_index - temporal_radius)
    hi = frame_index if causal else min(video.num_frames - 1, frame_index + temporal_radius)
    return range(lo, hi + 1)


def _check_query(video: PointCloudVideo, center: Point4D, temporal_radius) -> None:
    if video.num_frames == 0:
        raise QueryError("cannot query an empty video")
    if not 0 <= center.frame_index < video.num_frames:
        raise QueryError(
            f"frame index {center.frame_index} out of range for a {video.num_frames}-frame video"
        )
    if temporal_radius < 0:
        raise QueryError(f"temporal radius must be non-negative, got {temporal_radius}")


def _collect(video, center, frames, indices, spatial_radius, temporal_radius, undersized=False):
    frames = np.asarray(frames, dtype=np.intp)
    indices = np.asarray(indices, dtype=np.intp)
    order = np.lexsort((indices, frames))
    frames, indices = frames[order], indices[order]
    if frames.size:
        positions = np.stack([video.frames[f].positions[i] for f, i in zip(frames, indices)])
    else:
        positions = np.empty((0, 3))
    return Neighborhood(center, frames, indices, positions, spatial_radius, temporal_radius, undersized)


def query_neighborhood(video: PointCloudVideo, center: Point4D, spatial_radius: float,
                       temporal_radius: int, causal: bool = False) -> Neighborhood:
    """All points inside the cylindrical window around ``center``.

    A temporal radius of 0 restricts the search to the center's own frame.
    The center itself is a member whenever it is a point of the video.
    """
    _check_query(video, center, temporal_radius)
    if not spatial_radius > 0:
        raise QueryError(f"spatial radius must be positive, got {spatial_radius}")
    trees = video.trees()
    frames, indices = [], []
    for t in frame_window(video, center.frame_index, int(temporal_radius), causal):
        if np.isinf(spatial_radius):
            hits = list(range(video.frames[t].count))
        else:
            hits = trees[t].query_ball_point(center.position, spatial_radius)
        frames.extend([t] * len(hits))
        indices.extend(hits)
    return _collect(video, center, frames, indices, spatial_radius, int(temporal_radius))


def query_knn(video: PointCloudVideo, center: Point4D, k: int, temporal_radius: int,
              causal: bool = False) -> Neighborhood:
    """The ``k`` nearest points to ``center`` inside the frame window.

    Distance ties are broken by (frame offset, point index). When the window
    holds fewer than ``k`` points, all of them are returned and the result is
    flagged ``undersized``.
    """
    _check_query(video, center, temporal_radius)
    if k < 1:
        raise QueryError(f"k must be >= 1, got {k}")
    trees = video.trees()
    cand_f, cand_i, cand_d = [], [], []
    for t in frame_window(video, center.frame_index, int(temporal_radius), causal):
        n = video.frames[t].count
        kk = min(k, n)
        dist, _ = trees[t].query(center.position, k=kk)
        kth = float(np.atleast_1d(dist)[-1])
        # Re-query at the k-th distance so every tie at the boundary is a candidate.
        hits = np.asarray(trees[t].query_ball_point(center.position, np.nextafter(kth, np.inf)),
                          dtype=np.intp)
        d = np.linalg.norm(video.frames[t].positions[hits] - center.position, axis=1)
        cand_f.append(np.full(hits.size, t, dtype=np.intp))
        cand_i.append(hits)
        cand_d.append(d)
    f = np.concatenate(cand_f)
    i = np.concatenate(cand_i)
    d = np.concatenate(cand_d)
    total = int(sum(video.frames[t].count
                    for t in frame_window(video, center.frame_index, int(temporal_radius), causal)))
    order = np.lexsort((i, f - center.frame_index, d))[:k]
    radius = float(d[order].max()) if order.size else 0.0
    return _collect(video, center, f[order], i[order], radius, int(temporal_radius),
                    undersized=total < k)


def batch_neighborhoods(video: PointCloudVideo, spatial_radius: float, temporal_radius: int,
                        centers: Optional[Sequence[int]] = None, causal: bool = False):
    """Radius neighborhoods of many centers in CSR form.

    ``centers`` are global point ids (frame-major order); default is every
    point. Returns ``(centers, indptr, members)`` where ``members`` holds
    global ids, each center's slice ordered canonically.
    """
    if video.num_frames == 0:
        raise QueryError("cannot query an empty video")
    if not spatial_radius > 0:
        raise QueryError(f"spatial radius must be positive, got {spatial_radius}")
    n_total = video.total_points
    centers = np.arange(n_total) if centers is None else np.asarray(centers, dtype=np.intp)
    if centers.size and (centers.min() < 0 or centers.max() >= n_total):
        raise QueryError("center id out of range")
    base = video.offsets
    center_frame = video.frame_of_points()[centers]
    positions = video.all_positions()
    trees = video.trees()

    owners, blocks = [], []
    for t in np.unique(center_frame):
        sel = np.flatnonzero(center_frame == t)
        pts = positions[centers[sel]]
        for tp in frame_window(video, int(t), int(temporal_radius), causal):
            lists = trees[tp].query_ball_point(pts, spatial_radius, return_sorted=True)
            counts = np.fromiter(map(len, lists), dtype=np.intp, count=len(lists))
            flat = np.fromiter(itertools.chain.from_iterable(lists), dtype=np.intp,
                               count=int(counts.sum()))
            owners.append(np.repeat(sel, counts))
            blocks.append(flat + base[tp])
    owner = np.concatenate(owners) if owners else np.empty(0, dtype=np.intp)
    members = np.concatenate(blocks) if blocks else np.empty(0, dtype=np.intp)
    # Blocks arrive in ascending frame order per center, so a stable sort by
    # owner yields (frame, index) order inside each slice.
    order = np.argsort(owner, kind="stable")
    members = members[order]
    counts = np.bincount(owner, minlength=centers.size)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.intp)
    return centers, indptr, members
