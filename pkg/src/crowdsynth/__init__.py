"""Crowded-scene copy-paste synthesis, overlay-depth labels, consensus-loss
arithmetic, depth-aware NMS, and a desk-scale evaluation harness."""

from .geometry import (
    BBox,
    ObjectInstance,
    Scene,
    area,
    compute_od,
    intersection_area,
    iou,
    occluder_set,
    occlusion_ratio,
)
from .consensus import (
    LossWeights,
    ProposalScores,
    ScoreStats,
    combined_loss,
    consensus_loss,
    od_loss,
    score_stats,
)
from .odnms import (
    Detection,
    NmsConfig,
    od_nms,
    od_nms_indices,
    od_threshold,
    standard_nms,
    standard_nms_indices,
)
from .synthesis import (
    ConsensusPair,
    GroupSpec,
    Patch,
    PatchLibrary,
    SynthesisConfig,
    render,
    sample_group_centers,
    sample_member_position,
    sample_member_size,
    synthesize_scene,
)
from .evaluation import (
    IcdHistogram,
    MatchedSample,
    SimConfig,
    average_precision,
    icd_histogram,
    mr2,
    run_icd_experiment,
    run_recall_experiment,
    simulate_detections,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
