from __future__ import annotations

from dataclasses import dataclass, field
from enum import auto
from typing import Any

import numpy as np

from calyx_assess.arrays import FloatArray, IntArray, frozen
from calyx_assess.compat import StrEnum
from calyx_assess.constants import (
    DEFAULT_ESSENTIAL_SAMPSON_THRESHOLD_PX,
    DEFAULT_MAX_VIEW_DISTANCE_MM,
    DEFAULT_MIN_INLIER_COUNT,
    DEFAULT_MIN_INLIER_RATIO,
    DEFAULT_MIN_MATCH_COUNT,
    DEFAULT_OCCLUSION_EPSILON_MM,
    DEFAULT_PNP_REPROJECTION_THRESHOLD_PX,
    DEFAULT_RANSAC_ITERATIONS,
    DEFAULT_RATIO_TEST,
    DEFAULT_RETRIEVAL_K,
    DEFAULT_RNG_SEED,
    DEFAULT_V_MAX_MM_PER_S,
    DESCRIPTOR_NORM_TOLERANCE,
)
from calyx_assess.geometry.transforms import RigidTransform
from calyx_assess.validators import validate_fraction, validate_positive, validate_positive_int


class FrameStatus(StrEnum):
    ACCEPTED = auto()
    REJECTED_SPATIAL = auto()
    REJECTED_TEMPORAL = auto()
    UNLOCALIZED = auto()


class RejectReason(StrEnum):
    TOO_FEW_MATCHES = auto()
    TOO_FEW_INLIERS = auto()
    LOW_INLIER_RATIO = auto()


class PoseFailureReason(StrEnum):
    TOO_FEW_CORRESPONDENCES = auto()
    NO_SOLUTION = auto()
    TOO_FEW_INLIERS = auto()


class Visitation(StrEnum):
    VISITED = auto()
    MISSED = auto()


@dataclass(frozen=True, kw_only=True, slots=True, eq=False)
class Keypoints:
    """Local features of one frame, stored column-wise.

    point_ids holds the id of the 3D point a keypoint observes, or -1 when unknown (always -1 for query frames).
    """

    pixels: FloatArray
    descriptors: FloatArray
    point_ids: IntArray

    def __post_init__(self) -> None:
        pixels = np.asarray(self.pixels, dtype=np.float64).reshape(-1, 2)
        descriptors = np.asarray(self.descriptors, dtype=np.float64)
        if descriptors.ndim != 2 or len(descriptors) != len(pixels):
            raise ValueError(
                f"descriptors: Must be an ({len(pixels)}, d) array, but got shape {descriptors.shape}"
            )
        point_ids = np.asarray(self.point_ids, dtype=np.int64).reshape(-1)
        if len(point_ids) != len(pixels):
            raise ValueError(f"point_ids: Expected {len(pixels)} values, but got {len(point_ids)}")
        if len(point_ids) and point_ids.min() < -1:
            raise ValueError("point_ids: Must be -1 or a non-negative point id")
        object.__setattr__(self, "pixels", frozen(pixels))
        object.__setattr__(self, "descriptors", frozen(descriptors))
        object.__setattr__(self, "point_ids", frozen(point_ids))

    @classmethod
    def empty(cls, descriptor_dim: int) -> Keypoints:
        return cls(
            pixels=np.empty((0, 2)),
            descriptors=np.empty((0, descriptor_dim)),
            point_ids=np.empty(0, dtype=np.int64),
        )

    @property
    def descriptor_dim(self) -> int:
        return int(self.descriptors.shape[1])

    def __len__(self) -> int:
        return len(self.pixels)


def _validate_global_descriptor(value: Any) -> FloatArray:
    g = np.asarray(value, dtype=np.float64).reshape(-1)
    if not len(g):
        raise ValueError("global_descriptor: Must not be empty")
    norm = float(np.linalg.norm(g))
    if abs(norm - 1.0) > DESCRIPTOR_NORM_TOLERANCE:
        raise ValueError(f"global_descriptor: Must be unit length, but got norm {norm!r}")
    return frozen(g)


@dataclass(frozen=True, kw_only=True, slots=True, eq=False)
class QueryFrame:
    frame_id: int
    timestamp: float
    global_descriptor: FloatArray
    keypoints: Keypoints

    def __post_init__(self) -> None:
        validate_positive_int("frame_id", self.frame_id, allow_zero=True)
        object.__setattr__(self, "global_descriptor", _validate_global_descriptor(self.global_descriptor))


@dataclass(frozen=True, kw_only=True, slots=True, eq=False)
class ReferenceFrame:
    """A posed reference frame whose keypoints may link to 3D points of the reference cloud"""

    frame_id: int
    pose: RigidTransform
    global_descriptor: FloatArray
    keypoints: Keypoints
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        validate_positive_int("frame_id", self.frame_id, allow_zero=True)
        object.__setattr__(self, "global_descriptor", _validate_global_descriptor(self.global_descriptor))


@dataclass(frozen=True, kw_only=True, slots=True)
class PosedFrame:
    """A timestamped ground-truth (or estimated) camera-from-world pose"""

    frame_id: int
    timestamp: float
    pose: RigidTransform


@dataclass(frozen=True, kw_only=True, slots=True)
class LocalizedFrame:
    frame_id: int
    timestamp: float
    status: FrameStatus
    pose: RigidTransform | None = None
    inlier_count: int = 0
    inlier_ratio: float = 0.0

    def __post_init__(self) -> None:
        if self.status != FrameStatus.UNLOCALIZED and self.pose is None:
            raise ValueError(f"frame {self.frame_id}: A {self.status} frame must carry a pose")

    @property
    def camera_center(self) -> FloatArray | None:
        return None if self.pose is None else self.pose.center()


@dataclass(frozen=True, kw_only=True, slots=True)
class LocalizationParams:
    retrieval_k: int = DEFAULT_RETRIEVAL_K
    min_match_count: int = DEFAULT_MIN_MATCH_COUNT
    min_inlier_count: int = DEFAULT_MIN_INLIER_COUNT
    min_inlier_ratio: float = DEFAULT_MIN_INLIER_RATIO
    essential_sampson_threshold_px: float = DEFAULT_ESSENTIAL_SAMPSON_THRESHOLD_PX
    pnp_reprojection_threshold_px: float = DEFAULT_PNP_REPROJECTION_THRESHOLD_PX
    ransac_iterations: int = DEFAULT_RANSAC_ITERATIONS
    rng_seed: int = DEFAULT_RNG_SEED
    v_max_mm_per_s: float = DEFAULT_V_MAX_MM_PER_S
    ratio_test: float = DEFAULT_RATIO_TEST

    def __post_init__(self) -> None:
        validate_positive_int("retrieval_k", self.retrieval_k)
        validate_positive_int("min_match_count", self.min_match_count)
        validate_positive_int("min_inlier_count", self.min_inlier_count)
        validate_positive_int("ransac_iterations", self.ransac_iterations)
        validate_positive_int("rng_seed", self.rng_seed, allow_zero=True)
        object.__setattr__(
            self, "min_inlier_ratio", validate_fraction("min_inlier_ratio", self.min_inlier_ratio, inclusive_low=False)
        )
        object.__setattr__(self, "ratio_test", validate_fraction("ratio_test", self.ratio_test, inclusive_low=False))
        for name in ("essential_sampson_threshold_px", "pnp_reprojection_threshold_px", "v_max_mm_per_s"):
            object.__setattr__(self, name, validate_positive(name, getattr(self, name)))


@dataclass(frozen=True, kw_only=True, slots=True)
class VisibilityParams:
    max_view_distance_mm: float = DEFAULT_MAX_VIEW_DISTANCE_MM
    occlusion_epsilon_mm: float = DEFAULT_OCCLUSION_EPSILON_MM

    def __post_init__(self) -> None:
        for name in ("max_view_distance_mm", "occlusion_epsilon_mm"):
            object.__setattr__(self, name, validate_positive(name, getattr(self, name)))


@dataclass(frozen=True, kw_only=True, slots=True)
class DistanceStats:
    """Mean and population standard deviation of a set of distances"""

    mean: float
    std: float
    count: int = field(default=0)

    @classmethod
    def of(cls, values: FloatArray) -> DistanceStats:
        if not len(values):
            raise ValueError("Cannot summarize an empty set of distances")
        return cls(mean=float(np.mean(values)), std=float(np.std(values)), count=len(values))
