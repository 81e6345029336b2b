from calyx_assess.localization.absolute_pose import AbsolutePose, AbsolutePoseFailure, estimate_absolute_pose
from calyx_assess.localization.essential import PairVerification, verify_pair_essential
from calyx_assess.localization.filters import spatial_filter, temporal_filter
from calyx_assess.localization.matching import match_descriptors
from calyx_assess.localization.model import ReferenceModel, load_reference_model
from calyx_assess.localization.pipeline import localize_frame, localize_video, status_counts
from calyx_assess.localization.retrieval import retrieve_candidates

__all__ = [
    "AbsolutePose",
    "AbsolutePoseFailure",
    "PairVerification",
    "ReferenceModel",
    "estimate_absolute_pose",
    "load_reference_model",
    "localize_frame",
    "localize_video",
    "match_descriptors",
    "retrieve_candidates",
    "spatial_filter",
    "status_counts",
    "temporal_filter",
    "verify_pair_essential",
]
