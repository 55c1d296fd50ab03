"""Temporal-scaling attention and the composed GATS block (forward only).

Attention logits per head are

    q k^T / sqrt(d_head) + beta_h * Phi(s * |frame(q) - frame(k)|)

The bias depends only on the frame indices of the two tokens. Block
weights are fixed and drawn from a seeded generator, because every
invariance property checked here holds for any weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import erf

from .gaussian import DomainError, GatingConfig
from .temporal import PhiSpec, TemporalScale, bias_matrix, point_velocities, scaled_temporal_radius
from .uggc import KernelSpec, uggc_forward_batch
from .video import PointCloudVideo

FUSION_RULES = ("sum", "concat_project")

_QUERY_CHUNK = 1024


@dataclass(frozen=True)
class AttentionSpec:
    model_dim: int = 32
    head_count: int = 4
    beta: Union[float, Sequence[float]] = 1.0
    phi: PhiSpec = PhiSpec()
    fusion_rule: str = "sum"
    seed: int = 0
    ffn_multiplier: int = 2
    # Tokens per frame in the block; None keeps every point.
    anchors_per_frame: Optional[int] = 64
    rescale_temporal_radius: bool = False

    def __post_init__(self):
        if self.model_dim < 1 or self.head_count < 1 or self.model_dim % self.head_count:
            raise DomainError("model_dim must be a positive multiple of head_count")
        if self.fusion_rule not in FUSION_RULES:
            raise DomainError(f"unknown fusion rule {self.fusion_rule!r}")
        b = np.atleast_1d(np.asarray(self.beta, dtype=np.float64))
        if b.size not in (1, self.head_count):
            raise DomainError(f"beta needs 1 or {self.head_count} values, got {b.size}")
        if self.anchors_per_frame is not None and self.anchors_per_frame < 1:
            raise DomainError("anchors_per_frame must be >= 1")

    @property
    def betas(self) -> np.ndarray:
        b = np.atleast_1d(np.asarray(self.beta, dtype=np.float64))
        return np.broadcast_to(b, (self.head_count,)).copy()

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.head_count


@dataclass
class TokenSequence:
    """Tokens on an M x N grid (frames x anchors) with their frame indices."""

    tokens: np.ndarray
    frame_of: np.ndarray

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        if self.tokens.ndim != 3:
            raise DomainError(f"tokens must be (M, N, d), got {self.tokens.shape}")
        self.frame_of = np.asarray(self.frame_of, dtype=np.intp).reshape(self.tokens.shape[:2])
        bad = np.argwhere(~np.all(np.isfinite(self.tokens), axis=-1))
        if bad.size:
            m, n = bad[0]
            raise DomainError(f"non-finite token at frame slot {m}, anchor {n}")

    @classmethod
    def from_grid(cls, tokens, frames: Optional[Sequence[int]] = None) -> "TokenSequence":
        tokens = np.asarray(tokens, dtype=np.float64)
        m, n = tokens.shape[:2]
        frames = np.arange(m) if frames is None else np.asarray(frames)
        return cls(tokens, np.repeat(frames[:, None], n, axis=1))

    @property
    def shape(self):
        return self.tokens.shape

    def flat(self) -> np.ndarray:
        return self.tokens.reshape(-1, self.tokens.shape[-1])

    def flat_frames(self) -> np.ndarray:
        return self.frame_of.reshape(-1)


def _as_tokens(x) -> TokenSequence:
    if isinstance(x, TokenSequence):
        return x
    return TokenSequence.from_grid(x)


def _split_heads(x: np.ndarray, h: int) -> np.ndarray:
    n, d = x.shape
    return x.reshape(n, h, d // h).transpose(1, 0, 2)


def _check_shapes(q: TokenSequence, k: TokenSequence, v: TokenSequence, spec: AttentionSpec):
    if q.shape[-1] != k.shape[-1]:
        raise DomainError(f"query/key dimension mismatch: {q.shape[-1]} vs {k.shape[-1]}")
    if k.shape[:2] != v.shape[:2]:
        raise DomainError(f"key/value token count mismatch: {k.shape[:2]} vs {v.shape[:2]}")
    for name, t in (("query", q), ("key", k), ("value", v)):
        if t.shape[-1] % spec.head_count:
            raise DomainError(f"{name} dimension {t.shape[-1]} not divisible by {spec.head_count} heads")


def _probabilities(qh, kh, bias_rows, betas, scale_qk):
    """Softmax weights for one chunk of queries, all heads: (h, nq, nk)."""
    logits = np.matmul(qh, kh.transpose(0, 2, 1)) * scale_qk
    logits += betas[:, None, None] * bias_rows[None]
    logits -= logits.max(axis=-1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=-1, keepdims=True)
    return p


def attention_logits(q, k, spec: AttentionSpec, scale: TemporalScale) -> np.ndarray:
    """Pre-softmax logits per head, shape (h, L_q, L_k)."""
    q, k = _as_tokens(q), _as_tokens(k)
    h = spec.head_count
    qh, kh = _split_heads(q.flat(), h), _split_heads(k.flat(), h)
    bias = bias_matrix(q.flat_frames(), k.flat_frames(), scale, spec.phi)
    logits = np.matmul(qh, kh.transpose(0, 2, 1)) / np.sqrt(qh.shape[-1])
    return logits + spec.betas[:, None, None] * bias[None]


def attention_weights(q, k, spec: AttentionSpec, scale: TemporalScale) -> np.ndarray:
    """Full softmax matrix per head, shape (h, L_q, L_k)."""
    q, k = _as_tokens(q), _as_tokens(k)
    h = spec.head_count
    qh, kh = _split_heads(q.flat(), h), _split_heads(k.flat(), h)
    bias = bias_matrix(q.flat_frames(), k.flat_frames(), scale, spec.phi)
    return _probabilities(qh, kh, bias, spec.betas, 1.0 / np.sqrt(qh.shape[-1]))


def attention_forward(q, k, v, spec: AttentionSpec, scale: TemporalScale) -> TokenSequence:
    """Multi-head attention with the scaled temporal bias. Output keeps q's grid."""
    q, k, v = _as_tokens(q), _as_tokens(k), _as_tokens(v)
    _check_shapes(q, k, v, spec)
    h = spec.head_count
    qf, fq, fk = q.flat(), q.flat_frames(), k.flat_frames()
    kh, vh = _split_heads(k.flat(), h), _split_heads(v.flat(), h)
    scale_qk = 1.0 / np.sqrt(qf.shape[1] // h)
    betas = spec.betas
    out = np.empty((qf.shape[0], v.shape[-1]))
    for lo in range(0, qf.shape[0], _QUERY_CHUNK):
        hi = min(lo + _QUERY_CHUNK, qf.shape[0])
        bias = bias_matrix(fq[lo:hi], fk, scale, spec.phi)
        p = _probabilities(_split_heads(qf[lo:hi], h), kh, bias, betas, scale_qk)
        out[lo:hi] = np.matmul(p, vh).transpose(1, 0, 2).reshape(hi - lo, -1)
    return TokenSequence(out.reshape(*q.shape[:2], -1), q.frame_of)


def attention_vjp_q(q, k, v, spec: AttentionSpec, scale: TemporalScale, grad_out) -> np.ndarray:
    """Gradient of ``sum(grad_out * attention_forward(q, k, v))`` with respect to q."""
    q, k, v = _as_tokens(q), _as_tokens(k), _as_tokens(v)
    h = spec.head_count
    qh = _split_heads(q.flat(), h)
    kh, vh = _split_heads(k.flat(), h), _split_heads(v.flat(), h)
    g = _split_heads(np.asarray(grad_out, dtype=np.float64).reshape(qh.shape[1], -1), h)
    scale_qk = 1.0 / np.sqrt(qh.shape[-1])
    bias = bias_matrix(q.flat_frames(), k.flat_frames(), scale, spec.phi)
    p = _probabilities(qh, kh, bias, spec.betas, scale_qk)
    o = np.matmul(p, vh)
    # d loss / d logit_ij = p_ij * g_i . (v_j - o_i)
    dp = np.matmul(g, vh.transpose(0, 2, 1))
    dlogits = p * (dp - (g * o).sum(axis=-1, keepdims=True))
    dq = np.matmul(dlogits, kh) * scale_qk
    return dq.transpose(1, 0, 2).reshape(q.shape)


def projection_matrix(dim: int, seed: int = 0) -> np.ndarray:
    """Fixed (2*dim, dim) projection used by the concat_project fusion rule."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((2 * dim, dim)) / np.sqrt(2 * dim)


def fuse_keys(k_uggc, k_ts, rule: str = "sum", projection: Optional[np.ndarray] = None,
              seed: int = 0) -> np.ndarray:
    """Combine the Gaussian-branch and temporal-branch keys."""
    a = np.asarray(k_uggc, dtype=np.float64)
    b = np.asarray(k_ts, dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"key shape mismatch: {a.shape} vs {b.shape}")
    if rule == "sum":
        return a + b
    if rule != "concat_project":
        raise DomainError(f"unknown fusion rule {rule!r}")
    d = a.shape[-1]
    p = projection_matrix(d, seed) if projection is None else np.asarray(projection, dtype=np.float64)
    if p.shape != (2 * d, d):
        raise DomainError(f"projection must be ({2 * d}, {d}), got {p.shape}")
    return np.concatenate([a, b], axis=-1) @ p


def layer_norm(x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def farthest_point_sample(points: np.ndarray, n: int) -> np.ndarray:
    """Deterministic farthest-point sampling starting from point 0, in pick order."""
    m = points.shape[0]
    if n >= m:
        return np.arange(m)
    picked = np.empty(n, dtype=np.intp)
    dist = np.full(m, np.inf)
    cur = 0
    for i in range(n):
        picked[i] = cur
        d = ((points - points[cur]) ** 2).sum(axis=1)
        np.minimum(dist, d, out=dist)
        cur = int(np.argmax(dist))
    return picked


def select_anchors(video: PointCloudVideo, per_frame: Optional[int]) -> np.ndarray:
    """(M, N) global point ids of the anchor tokens, N equal across frames."""
    counts = video.counts
    n = int(counts.min()) if per_frame is None else min(int(per_frame), int(counts.min()))
    base = video.offsets
    if per_frame is None and np.all(counts == n):
        return base[:, None] + np.arange(n)[None, :]
    rows = [base[t] + farthest_point_sample(f.positions, n) for t, f in enumerate(video.frames)]
    return np.stack(rows)


@dataclass
class BlockWeights:
    embed: np.ndarray
    temporal: np.ndarray
    wq: np.ndarray
    wk_uggc: np.ndarray
    wk_ts: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    fusion: np.ndarray

    @classmethod
    def seeded(cls, in_dim: int, spec: AttentionSpec) -> "BlockWeights":
        rng = np.random.default_rng(spec.seed)
        d = spec.model_dim
        hidden = spec.ffn_multiplier * d

        def dense(a, b):
            return rng.standard_normal((a, b)) / np.sqrt(a)

        # Draw order is part of the reproducibility contract.
        return cls(
            embed=dense(in_dim + 3, d),
            temporal=dense(in_dim + 6, d),
            wq=dense(d, d),
            wk_uggc=dense(d, d),
            wk_ts=dense(d, d),
            wv=dense(d, d),
            wo=dense(d, d),
            w1=dense(d, hidden),
            w2=dense(hidden, d),
            fusion=dense(2 * d, d),
        )


def gats_block_forward(video: PointCloudVideo, features=None, kernel: KernelSpec = KernelSpec(),
                       gate: GatingConfig = GatingConfig(), spec: AttentionSpec = AttentionSpec(),
                       scale: TemporalScale = TemporalScale(1.0), temporal_radius: int = 1,
                       return_details: bool = False):
    """One GATS block over a video, returning an (M, N, model_dim) TokenSequence.

    Gaussian-aware tokens come from UGGC at the anchor points; temporal tokens
    append normalized velocities to the raw features. Keys fuse both
    branches; queries and values come from the Gaussian-aware tokens. The
    attention and feed-forward sublayers are pre-norm with residuals.
    """
    if video.num_frames == 0:
        raise DomainError("empty video")
    raw = video.all_features()
    raw = video.all_positions() if raw is None else raw
    feats = raw if features is None else np.asarray(features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[:, None]
    anchors = select_anchors(video, spec.anchors_per_frame)
    ids = anchors.reshape(-1)
    r_t = scaled_temporal_radius(temporal_radius, scale) if spec.rescale_temporal_radius \
        else int(temporal_radius)

    ug = uggc_forward_batch(video, feats, kernel, r_t, gate, centers=ids)
    pos = video.all_positions()[ids]
    vel = point_velocities(video, scale)[ids]
    w = BlockWeights.seeded(feats.shape[1], spec)

    s_ga = np.hstack([ug.features, pos]) @ w.embed
    temporal_tokens = np.hstack([feats[ids], pos, vel]) @ w.temporal
    x = layer_norm(s_ga)
    q = x @ w.wq
    k = fuse_keys(x @ w.wk_uggc, layer_norm(temporal_tokens) @ w.wk_ts, spec.fusion_rule,
                  projection=w.fusion)
    v = x @ w.wv

    m, n = anchors.shape
    frames = video.frame_of_points()[ids].reshape(m, n)
    grid = lambda a: TokenSequence(a.reshape(m, n, -1), frames)  # noqa: E731
    attn = attention_forward(grid(q), grid(k), grid(v), spec, scale).flat()
    hdn = s_ga + attn @ w.wo
    out = hdn + gelu(layer_norm(hdn) @ w.w1) @ w.w2
    result = grid(out)
    if return_details:
        return result, {"anchors": anchors, "uggc": ug, "velocities": vel, "temporal_radius": r_t}
    return result
