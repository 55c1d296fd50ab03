"""Gaussian-aware temporal scaling operators for 4D point-cloud videos."""

from .attention import (
    AttentionSpec,
    TokenSequence,
    attention_forward,
    fuse_keys,
    gats_block_forward,
)
from .gaussian import (
    DomainError,
    GatingConfig,
    LocalGaussian,
    condition_number,
    estimate_gaussian,
    gate_features,
    gating_alpha,
)
from .io import ParseError, read_tokens, read_video, write_tokens, write_video
from .temporal import (
    PhiSpec,
    TemporalScale,
    VelocityEstimate,
    relative_velocity,
    scale_from_fps,
    scale_from_frame_count,
    scaled_temporal_radius,
    temporal_bias,
)
from .uggc import KernelSpec, UGGCOutput, gaussian_weight, uggc_forward, uggc_forward_batch
from .video import (
    Frame,
    Neighborhood,
    Point4D,
    PointCloudVideo,
    QueryError,
    query_knn,
    query_neighborhood,
)

__version__ = "0.1.0"
