"""Readers and writers for point-cloud videos (PCV1 / PCVB) and token grids (TOK1).

PCV1 (text)::

    PCV1 <T> <dt_seconds> <feature_dim>
    FRAME <t> <N_t>
    x y z [f1 ... fd]        # N_t lines
    ...

Text values are written with the shortest repr that round-trips a 64-bit
float, so text files are bit-exact for any video.

PCVB (binary, little-endian)::

    b"PCVB" | uint32 T | float64 dt | uint32 feature_dim
    per frame: uint32 t | uint32 N_t | N_t * (3 + d) float32

Binary coordinates are 32-bit and widened to 64-bit on read; a binary
round-trip is exact for float32-representable videos.

TOK1 (text)::

    TOK1 <M> <N> <d>
    M*N lines of d floats, frame-major
"""

from __future__ import annotations

import os
import struct
from typing import Union

import numpy as np

from .video import Frame, PointCloudVideo, VideoError

PathLike = Union[str, os.PathLike]

_BIN_HEADER = struct.Struct("<4sIdI")
_BIN_FRAME = struct.Struct("<II")


class ParseError(ValueError):
    """Malformed video or token file. Carries the frame and byte offset when known."""

    def __init__(self, message: str, frame: int | None = None, offset: int | None = None):
        where = []
        if frame is not None:
            where.append(f"frame {frame}")
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.frame = frame
        self.offset = offset


def _fmt(x: float) -> str:
    return repr(float(x))


def write_video(video: PointCloudVideo, path: PathLike, binary: bool = False) -> None:
    if binary:
        _write_binary(video, path)
        return
    d = video.feature_dim
    lines = [f"PCV1 {video.num_frames} {_fmt(video.frame_interval)} {d}"]
    for t, frame in enumerate(video.frames):
        lines.append(f"FRAME {t} {frame.count}")
        rows = frame.positions if frame.features is None else np.hstack([frame.positions, frame.features])
        lines.extend(" ".join(_fmt(v) for v in row) for row in rows)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def _write_binary(video: PointCloudVideo, path: PathLike) -> None:
    d = video.feature_dim
    with open(path, "wb") as fh:
        fh.write(_BIN_HEADER.pack(b"PCVB", video.num_frames, float(video.frame_interval), d))
        for t, frame in enumerate(video.frames):
            fh.write(_BIN_FRAME.pack(t, frame.count))
            rows = frame.positions if frame.features is None else np.hstack([frame.positions, frame.features])
            fh.write(np.ascontiguousarray(rows, dtype="<f4").tobytes())


def read_video(path: PathLike) -> PointCloudVideo:
    """Read a PCV1 or PCVB file; the format is detected from the magic bytes."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data:
        raise ParseError("empty file", offset=0)
    if data[:4] == b"PCVB":
        return _read_binary(data)
    if data[:4] == b"PCV1":
        return _read_text(data)
    raise ParseError(f"unknown magic {data[:4]!r}", offset=0)


def _read_text(data: bytes) -> PointCloudVideo:
    # Walk lines while tracking the byte offset of each line start.
    lines = []
    pos = 0
    for raw in data.split(b"\n"):
        if raw.strip():
            lines.append((pos, raw.decode("ascii", errors="replace").split()))
        pos += len(raw) + 1
    off, head = lines[0]
    if len(head) != 4:
        raise ParseError("malformed header, expected 'PCV1 <T> <dt> <feature_dim>'", offset=off)
    try:
        n_frames, dt, d = int(head[1]), float(head[2]), int(head[3])
    except ValueError:
        raise ParseError("malformed header values", offset=off) from None
    if n_frames < 0 or d < 0:
        raise ParseError("negative frame count or feature dimension", offset=off)
    cursor = 1
    frames = []
    for t in range(n_frames):
        if cursor >= len(lines):
            raise ParseError("truncated file, missing FRAME line", frame=t, offset=len(data))
        off, tok = lines[cursor]
        if len(tok) != 3 or tok[0] != "FRAME":
            raise ParseError("expected 'FRAME <t> <N_t>'", frame=t, offset=off)
        try:
            ft, n = int(tok[1]), int(tok[2])
        except ValueError:
            raise ParseError("malformed FRAME line", frame=t, offset=off) from None
        if ft != t:
            raise ParseError(f"frame index {ft} out of sequence", frame=t, offset=off)
        rows = np.empty((n, 3 + d), dtype=np.float64)
        for j in range(n):
            cursor += 1
            if cursor >= len(lines):
                raise ParseError(f"truncated frame, got {j} of {n} points", frame=t, offset=len(data))
            off, tok = lines[cursor]
            if len(tok) != 3 + d:
                raise ParseError(f"expected {3 + d} values, got {len(tok)}", frame=t, offset=off)
            try:
                rows[j] = [float(v) for v in tok]
            except ValueError:
                raise ParseError("unparseable number", frame=t, offset=off) from None
            if not np.all(np.isfinite(rows[j])):
                raise ParseError("non-finite value", frame=t, offset=off)
        cursor += 1
        frames.append(_make_frame(rows, d, t, off))
    if cursor < len(lines):
        raise ParseError("trailing data after last frame", offset=lines[cursor][0])
    return _make_video(frames, dt)


def _read_binary(data: bytes) -> PointCloudVideo:
    if len(data) < _BIN_HEADER.size:
        raise ParseError("truncated binary header", offset=0)
    _, n_frames, dt, d = _BIN_HEADER.unpack_from(data, 0)
    pos = _BIN_HEADER.size
    frames = []
    for t in range(n_frames):
        if pos + _BIN_FRAME.size > len(data):
            raise ParseError("truncated file, missing frame header", frame=t, offset=pos)
        ft, n = _BIN_FRAME.unpack_from(data, pos)
        if ft != t:
            raise ParseError(f"frame index {ft} out of sequence", frame=t, offset=pos)
        pos += _BIN_FRAME.size
        nbytes = n * (3 + d) * 4
        if pos + nbytes > len(data):
            raise ParseError(f"truncated frame, need {nbytes} bytes", frame=t, offset=pos)
        rows = np.frombuffer(data, dtype="<f4", count=n * (3 + d), offset=pos)
        rows = rows.reshape(n, 3 + d).astype(np.float64)
        bad = np.flatnonzero(~np.all(np.isfinite(rows), axis=1))
        if bad.size:
            raise ParseError("non-finite value", frame=t, offset=pos + int(bad[0]) * (3 + d) * 4)
        frames.append(_make_frame(rows, d, t, pos))
        pos += nbytes
    if pos != len(data):
        raise ParseError("trailing data after last frame", offset=pos)
    return _make_video(frames, dt)


def _make_frame(rows: np.ndarray, d: int, t: int, offset: int) -> Frame:
    try:
        return Frame(rows[:, :3].copy(), rows[:, 3:].copy() if d else None)
    except VideoError as exc:
        raise ParseError(str(exc), frame=t, offset=offset) from None


def _make_video(frames, dt) -> PointCloudVideo:
    try:
        return PointCloudVideo(frames, dt)
    except VideoError as exc:
        raise ParseError(str(exc), offset=0) from None


def write_tokens(tokens: np.ndarray, path: PathLike) -> None:
    """Write an (M, N, d) token array as TOK1."""
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 3:
        raise ValueError(f"tokens must be (M, N, d), got shape {tokens.shape}")
    m, n, d = tokens.shape
    lines = [f"TOK1 {m} {n} {d}"]
    lines.extend(" ".join(_fmt(v) for v in row) for row in tokens.reshape(m * n, d))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def read_tokens(path: PathLike) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        text = fh.read()
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or rows[0][0] != "TOK1" or len(rows[0]) != 4:
        raise ParseError("malformed TOK1 header", offset=0)
    m, n, d = (int(v) for v in rows[0][1:])
    body = rows[1:]
    if len(body) != m * n or any(len(r) != d for r in body):
        raise ParseError(f"expected {m * n} rows of {d} values")
    return np.array(body, dtype=np.float64).reshape(m, n, d)
