"""Streaming uncertainty estimation for video semantic segmentation.

One stochastic forward pass per frame, flow-warped and exponentially
averaged, stands in for an N-sample Monte Carlo dropout ensemble; a
region gate on warp reconstruction error keeps bad flow from poisoning
the average.  The package also ships the brute-force MC oracle, a
synthetic video world with exact ground-truth flow, and the evaluation
suite (segmentation metrics, sparsification curves, frame-ranking
scores).
"""

from .aggregator import (
    AggregationPolicy,
    AggregatorState,
    PolicyKind,
    SampleSequenceModel,
    StochasticModel,
    init_state,
    mc_predict,
    rta_alpha_map,
    rta_step,
    step,
    ta_step,
)
from .backend import active_backend
from .evaluation import (
    ConfusionMatrix,
    EvalReport,
    PRCurve,
    RankingReport,
    SegMetrics,
    confusion,
    frame_error_rank,
    frame_uncertainty_rank,
    kendall_tau,
    pr_sparsification,
    ranking_iou,
    seg_metrics,
)
from .synthworld import (
    MovingObject,
    NoiseSpec,
    SceneSpec,
    SynthFrameBundle,
    SynthSegmenterModel,
    corrupt_flow,
    generate_video,
    iter_frames,
    sample_segmenter,
)
from .tensorfile import read_tensor, write_tensor
from .tensors import (
    VOID_LABEL,
    FlowField,
    ImageFrame,
    LabelMap,
    ProbMap,
    ScalarMap,
    argmax_labels,
    new_prob_map,
    normalize,
)
from .uncertainty import (
    UncertaintyKind,
    bald,
    entropy,
    mean_std,
    uncertainty_from_state,
    variation_ratio,
)
from .warp import (
    BorderMode,
    WarpConfig,
    WarpMode,
    reconstruction_error,
    warp_image,
    warp_prob,
    warp_scalar,
)

__version__ = "0.1.0"

__all__ = [
    "AggregationPolicy",
    "AggregatorState",
    "BorderMode",
    "ConfusionMatrix",
    "EvalReport",
    "FlowField",
    "ImageFrame",
    "LabelMap",
    "MovingObject",
    "NoiseSpec",
    "PRCurve",
    "PolicyKind",
    "ProbMap",
    "RankingReport",
    "SampleSequenceModel",
    "ScalarMap",
    "SceneSpec",
    "SegMetrics",
    "StochasticModel",
    "SynthFrameBundle",
    "SynthSegmenterModel",
    "UncertaintyKind",
    "VOID_LABEL",
    "WarpConfig",
    "WarpMode",
    "active_backend",
    "argmax_labels",
    "bald",
    "confusion",
    "corrupt_flow",
    "entropy",
    "frame_error_rank",
    "frame_uncertainty_rank",
    "generate_video",
    "init_state",
    "iter_frames",
    "kendall_tau",
    "mc_predict",
    "mean_std",
    "new_prob_map",
    "normalize",
    "pr_sparsification",
    "ranking_iou",
    "read_tensor",
    "reconstruction_error",
    "rta_alpha_map",
    "rta_step",
    "sample_segmenter",
    "seg_metrics",
    "step",
    "ta_step",
    "uncertainty_from_state",
    "variation_ratio",
    "warp_image",
    "warp_prob",
    "warp_scalar",
    "write_tensor",
]
