"""Scale-adaptive patch matching with co-visibility estimation and
sub-pixel refinement, validated on synthetic scenes with exact geometry."""

__version__ = "0.1.0"

from .assignment import (
    MatchSet,
    ScaleEstimate,
    SimilarityMatrix,
    dual_softmax_proposals,
    estimate_scale,
    filter_covisible,
    proposals_from_external,
    similarity,
)
from .cfi import CfiOutput, CfiWeights, attention, cfi_forward
from .covisible import CoVisibleMap, CovisibleWeights, covisible_head, threshold_mask
from .geometry import (
    CameraFrame,
    Homography,
    epipolar_error,
    homography_apply,
    project,
    projected_distance,
)
from .labels import GroundTruthLabels, generate_labels, gt_matches_fine
from .losses import LossConfig, focal_loss, refine_loss, total_loss
from .refine import RefineConfig, RefinedMatch, expectation_regress, refine_matches, scale_align
from .synthscene import PoseOffset, ScenePair, make_3d_pair, make_planar_pair

__all__ = [
    "MatchSet", "ScaleEstimate", "SimilarityMatrix", "dual_softmax_proposals",
    "estimate_scale", "filter_covisible", "proposals_from_external", "similarity",
    "CfiOutput", "CfiWeights", "attention", "cfi_forward",
    "CoVisibleMap", "CovisibleWeights", "covisible_head", "threshold_mask",
    "CameraFrame", "Homography", "epipolar_error", "homography_apply",
    "project", "projected_distance",
    "GroundTruthLabels", "generate_labels", "gt_matches_fine",
    "LossConfig", "focal_loss", "refine_loss", "total_loss",
    "RefineConfig", "RefinedMatch", "expectation_regress", "refine_matches", "scale_align",
    "PoseOffset", "ScenePair", "make_3d_pair", "make_planar_pair",
]
