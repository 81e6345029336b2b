from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from calyx_assess.arrays import FloatArray, as_points
from calyx_assess.constants import DEFAULT_COVERAGE_RADIUS_MM, DEFAULT_FIDUCIAL_EVERY, DEFAULT_HAUSDORFF_PERCENTILE
from calyx_assess.geometry.camera import PinholeCamera
from calyx_assess.geometry.mesh import TriMesh
from calyx_assess.geometry.transforms import RigidTransform, SimilarityTransform, compose
from calyx_assess.registration import PointCloud, align_fiducials
from calyx_assess.types import DistanceStats, LocalizedFrame, PosedFrame, ReferenceFrame
from calyx_assess.validators import validate_percentile, validate_positive, validate_positive_int

__all__ = [
    "PoseErrorStats",
    "ReconstructionMetrics",
    "ReprojectionObservation",
    "ReprojectionResult",
    "TrajectoryAlignment",
    "align_trajectory",
    "coverage",
    "evaluate_reconstruction",
    "fiducial_split",
    "hausdorff_percentile",
    "pose_errors",
    "reference_observations",
    "reprojection_error",
    "single_sided_chamfer",
    "target_registration_error",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, kw_only=True, slots=True)
class ReprojectionObservation:
    pose: RigidTransform
    camera: PinholeCamera
    point: tuple[float, float, float]
    pixel: tuple[float, float]


@dataclass(frozen=True, kw_only=True, slots=True)
class ReprojectionResult:
    mean_px: float
    used: int
    excluded_behind_camera: int


@dataclass(frozen=True, kw_only=True, slots=True)
class PoseErrorStats:
    position_mm: DistanceStats
    rotation_deg: DistanceStats


def _require_points(cloud: PointCloud, name: str) -> FloatArray:
    if not len(cloud):
        raise ValueError(f"{name}: Point cloud must be non-empty")
    return cloud.points


def single_sided_chamfer(source: PointCloud, target: TriMesh) -> DistanceStats:
    """Mean and standard deviation of the exact point-to-surface distance of every source point"""
    return DistanceStats.of(target.distance(_require_points(source, "source")))


def hausdorff_percentile(source: PointCloud, target: TriMesh, p: float = DEFAULT_HAUSDORFF_PERCENTILE) -> float:
    """Nearest-rank percentile of the point-to-surface distances

    :param source: Points to measure
    :param target: Surface to measure against
    :param p: Percentile in (0, 100]
    """
    p = validate_percentile("p", p)
    dist = np.sort(target.distance(_require_points(source, "source")))
    # exact rational arithmetic on the percentile as written: 7 % of 100 points is rank 7
    rank = max(1, math.ceil(Fraction(str(p)) * len(dist) / 100))
    return float(dist[rank - 1])


def coverage(ct_points: PointCloud, recon_points: PointCloud, radius_mm: float = DEFAULT_COVERAGE_RADIUS_MM) -> float:
    """Percentage of CT points with a reconstruction point within radius_mm"""
    radius_mm = validate_positive("radius_mm", radius_mm, allow_zero=True)
    ct = _require_points(ct_points, "ct_points")
    tree = cKDTree(_require_points(recon_points, "recon_points"))
    dist, _ = tree.query(ct)
    return 100.0 * float(np.count_nonzero(dist <= radius_mm)) / len(ct)


def reprojection_error(observations: Iterable[ReprojectionObservation]) -> ReprojectionResult:
    """Mean pixel distance between observed keypoints and the projections of their 3D points.

    Observations whose point is not in front of the camera are excluded and counted.
    """
    errors: list[float] = []
    excluded = 0
    for obs in observations:
        projected = obs.camera.project_point(obs.pose.apply(np.asarray(obs.point)))
        if projected is None:
            excluded += 1
            continue
        errors.append(math.hypot(projected[0] - obs.pixel[0], projected[1] - obs.pixel[1]))
    if excluded:
        logger.warning(f"{excluded} observation(s) behind their camera were excluded from the reprojection error")
    if not errors:
        raise ValueError("No observation in front of its camera; the reprojection error is undefined")
    return ReprojectionResult(
        mean_px=math.fsum(errors) / len(errors), used=len(errors), excluded_behind_camera=excluded
    )


def reference_observations(
    frames: Iterable[ReferenceFrame], cloud: PointCloud, camera: PinholeCamera
) -> Iterator[ReprojectionObservation]:
    """Yield one observation per reference keypoint linked to a 3D point"""
    for frame in frames:
        kps = frame.keypoints
        for pixel, pid in zip(kps.pixels.tolist(), kps.point_ids.tolist()):
            if pid < 0:
                continue
            x, y, z = cloud.points[pid].tolist()
            yield ReprojectionObservation(pose=frame.pose, camera=camera, point=(x, y, z), pixel=(pixel[0], pixel[1]))


def target_registration_error(t: SimilarityTransform, source: FloatArray, target: FloatArray) -> DistanceStats:
    """Distance between transformed held-out source points and their targets

    :param t: Alignment estimated on the fiducials
    :param source: (N, 3) held-out points in the source frame
    :param target: (N, 3) matching ground-truth points
    """
    src = as_points(source, name="source")
    tgt = as_points(target, name="target")
    if not len(src):
        raise ValueError("held-out set must be non-empty")
    return DistanceStats.of(np.linalg.norm(t.apply(src) - tgt, axis=1))


def fiducial_split(count: int, every: int = DEFAULT_FIDUCIAL_EVERY) -> tuple[list[int], list[int]]:
    """Split positions 0..count-1 into fiducials (every `every`-th, starting at 0) and held-out positions"""
    validate_positive_int("every", every)
    fiducials = list(range(0, count, every))
    held_out = [i for i in range(count) if i % every]
    return fiducials, held_out


def pose_errors(
    estimated: Sequence[PosedFrame | LocalizedFrame | ReferenceFrame],
    ground_truth: Sequence[PosedFrame],
    transform: SimilarityTransform | None = None,
) -> PoseErrorStats:
    """Position and orientation error of estimated camera poses against ground truth, matched by frame id.

    The transform maps the estimate's world frame into the ground-truth world frame. The angular error between
    two rotations is 2 * arcsin(||R_a - R_b||_F / sqrt(8)).

    :param estimated: Estimated poses; frames without a pose are skipped
    :param ground_truth: Ground-truth poses
    :param transform: Estimate-to-ground-truth alignment (identity when omitted)
    """
    t = transform or SimilarityTransform.identity()
    truth = {fr.frame_id: fr.pose for fr in ground_truth}
    pos_err: list[float] = []
    rot_err: list[float] = []
    for fr in estimated:
        if fr.pose is None or fr.frame_id not in truth:
            continue
        gt = truth[fr.frame_id]
        pos_err.append(float(np.linalg.norm(t.apply(fr.pose.center()) - gt.center())))
        world_from_cam = t.matrix @ fr.pose.matrix.T
        diff = float(np.linalg.norm(world_from_cam - gt.matrix.T))
        rot_err.append(math.degrees(2.0 * math.asin(min(1.0, diff / math.sqrt(8.0)))))
    if not pos_err:
        raise ValueError("No estimated pose has a ground-truth counterpart")
    return PoseErrorStats(
        position_mm=DistanceStats.of(np.asarray(pos_err)), rotation_deg=DistanceStats.of(np.asarray(rot_err))
    )


@dataclass(frozen=True, kw_only=True, slots=True)
class TrajectoryAlignment:
    """Similarity between an estimated and a ground-truth trajectory, fitted on fiducial frames.

    The target registration error and the pose errors are measured on the held-out frames.
    """

    transform: SimilarityTransform
    fiducial_count: int
    held_out_count: int
    tre: DistanceStats | None
    pose_error: PoseErrorStats | None


@dataclass(frozen=True, kw_only=True, slots=True)
class ReconstructionMetrics:
    chamfer: DistanceStats
    hausdorff_mm: float
    hausdorff_percentile: float
    coverage_percent: float
    coverage_radius_mm: float
    reprojection: ReprojectionResult
    alignment: TrajectoryAlignment | None = None
    query_pose_error: PoseErrorStats | None = None


def align_trajectory(
    estimated: Sequence[PosedFrame | LocalizedFrame | ReferenceFrame],
    ground_truth: Sequence[PosedFrame],
    *,
    every: int = DEFAULT_FIDUCIAL_EVERY,
    with_scale: bool = True,
    seed: int = 0,
) -> TrajectoryAlignment:
    """Align estimated camera centers to ground truth on every `every`-th matched frame

    Frames are matched by id and ordered by id. Frames without an estimated pose are skipped.

    :param estimated: Estimated frames
    :param ground_truth: Ground-truth frames
    :param every: Fiducial spacing
    :param with_scale: Solve for a uniform scale
    :param seed: RANSAC seed of the fiducial alignment
    :raises DegenerateFiducials: Fewer than 3 fiducials, or collinear fiducials
    """
    truth = {fr.frame_id: fr.pose for fr in ground_truth}
    matched = sorted(
        (fr for fr in estimated if fr.pose is not None and fr.frame_id in truth), key=lambda fr: fr.frame_id
    )
    source = np.array([fr.pose.center() for fr in matched]).reshape(-1, 3)  # type: ignore[union-attr]
    target = np.array([truth[fr.frame_id].center() for fr in matched]).reshape(-1, 3)
    fiducials, held_out = fiducial_split(len(matched), every)
    transform = align_fiducials(source[fiducials], target[fiducials], with_scale=with_scale, seed=seed)
    tre = pose_error = None
    if held_out:
        tre = target_registration_error(transform, source[held_out], target[held_out])
        pose_error = pose_errors([matched[i] for i in held_out], ground_truth, transform)
    logger.info(
        f"Trajectory alignment on {len(fiducials)} fiducial(s), scale {transform.scale:.4f}"
        + (f", TRE {tre.mean:.3f} +- {tre.std:.3f} mm on {len(held_out)} frame(s)" if tre else "")
    )
    return TrajectoryAlignment(
        transform=transform,
        fiducial_count=len(fiducials),
        held_out_count=len(held_out),
        tre=tre,
        pose_error=pose_error,
    )


def evaluate_reconstruction(
    cloud: PointCloud,
    frames: Sequence[ReferenceFrame],
    mesh: TriMesh,
    camera: PinholeCamera,
    *,
    registration: RigidTransform | None = None,
    ground_truth: Sequence[PosedFrame] | None = None,
    query_estimates: Sequence[LocalizedFrame] | None = None,
    query_ground_truth: Sequence[PosedFrame] | None = None,
    fiducial_every: int = DEFAULT_FIDUCIAL_EVERY,
    with_scale: bool = True,
    percentile: float = DEFAULT_HAUSDORFF_PERCENTILE,
    coverage_radius_mm: float = DEFAULT_COVERAGE_RADIUS_MM,
) -> ReconstructionMetrics:
    """Accuracy of a reference reconstruction against the CT mesh, and optionally against tracked poses

    :param cloud: Reconstruction point cloud in its own frame
    :param frames: Posed reference frames in the frame of the cloud
    :param mesh: CT surface
    :param camera: Camera intrinsics of the reference frames
    :param registration: Reconstruction-to-CT transform; identity when omitted
    :param ground_truth: Tracked reference poses, enabling the fiducial alignment and TRE
    :param query_estimates: Localized query frames, in the CT frame
    :param query_ground_truth: Tracked query poses
    :param fiducial_every: Fiducial spacing
    :param with_scale: Solve the fiducial alignment for a uniform scale
    :param percentile: Hausdorff percentile
    :param coverage_radius_mm: Coverage radius
    """
    registered = cloud.transformed(registration) if registration is not None else cloud
    alignment = None
    query_error = None
    if ground_truth is not None:
        alignment = align_trajectory(frames, ground_truth, every=fiducial_every, with_scale=with_scale)
    if query_estimates is not None and query_ground_truth is not None:
        if alignment is None:
            raise ValueError("Query localization accuracy needs the reference ground-truth trajectory")
        # query poses live in the CT frame; move them back into the reconstruction frame first
        to_truth = alignment.transform
        if registration is not None:
            to_truth = compose(to_truth, registration.inverse())
        query_error = pose_errors(query_estimates, query_ground_truth, to_truth)
    return ReconstructionMetrics(
        chamfer=single_sided_chamfer(registered, mesh),
        hausdorff_mm=hausdorff_percentile(registered, mesh, percentile),
        hausdorff_percentile=percentile,
        coverage_percent=coverage(PointCloud(mesh.vertices), registered, coverage_radius_mm),
        coverage_radius_mm=coverage_radius_mm,
        reprojection=reprojection_error(reference_observations(frames, cloud, camera)),
        alignment=alignment,
        query_pose_error=query_error,
    )
