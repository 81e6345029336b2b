from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.spatial import cKDTree

from calyx_assess.arrays import FloatArray, as_points, frozen
from calyx_assess.constants import (
    DEFAULT_FIDUCIAL_INLIER_THRESHOLD_MM,
    DEFAULT_FIDUCIAL_RANSAC_ITERATIONS,
    DEFAULT_ICP_CONVERGENCE_DELTA_MM,
    DEFAULT_ICP_CORRESPONDENCE_CUTOFF_MM,
    DEFAULT_ICP_MAX_ITERATIONS,
)
from calyx_assess.exceptions import DegenerateFiducials, InitializationTooFar, MeshFormatError
from calyx_assess.formats.ply import PlyData, write_ply
from calyx_assess.formats.reader import read_file
from calyx_assess.geometry.transforms import RigidTransform, SimilarityTransform, compose
from calyx_assess.validators import validate_positive, validate_positive_int

__all__ = [
    "IcpParams",
    "PointCloud",
    "RegistrationResult",
    "align_fiducials",
    "fit_similarity",
    "icp_register",
    "load_point_cloud",
    "save_point_cloud",
]

logger = logging.getLogger(__name__)

# Relative singular value below which a fiducial set counts as collinear
_COLLINEAR_TOLERANCE = 1e-9


@dataclass(frozen=True, slots=True, eq=False)
class PointCloud:
    points: FloatArray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        pts = as_points(pts)
        if not np.all(np.isfinite(pts)):
            raise ValueError("points: Must be finite")
        object.__setattr__(self, "points", frozen(pts))

    def __len__(self) -> int:
        return len(self.points)

    def transformed(self, transform: RigidTransform | SimilarityTransform) -> PointCloud:
        return PointCloud(transform.apply(self.points))


@dataclass(frozen=True, kw_only=True, slots=True)
class IcpParams:
    max_iterations: int = DEFAULT_ICP_MAX_ITERATIONS
    convergence_delta_mm: float = DEFAULT_ICP_CONVERGENCE_DELTA_MM
    correspondence_cutoff_mm: float = DEFAULT_ICP_CORRESPONDENCE_CUTOFF_MM

    def __post_init__(self) -> None:
        validate_positive_int("max_iterations", self.max_iterations)
        object.__setattr__(
            self, "convergence_delta_mm", validate_positive("convergence_delta_mm", self.convergence_delta_mm)
        )
        object.__setattr__(
            self,
            "correspondence_cutoff_mm",
            validate_positive("correspondence_cutoff_mm", self.correspondence_cutoff_mm),
        )


@dataclass(frozen=True, kw_only=True, slots=True)
class RegistrationResult:
    """Outcome of ICP.

    residual_history[i] is the mean correspondence distance after i accepted updates (index 0 is the initial
    alignment); the sequence never increases.
    """

    transform: RigidTransform
    mean_residual_mm: float
    iterations_used: int
    residual_history: tuple[float, ...] = field(default=())


def fit_similarity(source: FloatArray, target: FloatArray, *, with_scale: bool) -> SimilarityTransform:
    """Closed-form least-squares alignment of paired points (SVD of the cross-covariance)

    :param source: (N, 3) points
    :param target: (N, 3) points paired with source
    :param with_scale: Solve for a uniform scale; otherwise the scale is exactly 1
    """
    mu_s = source.mean(axis=0)
    mu_t = target.mean(axis=0)
    src = source - mu_s
    tgt = target - mu_t
    cov = tgt.T @ src / len(source)
    u, sigma, vt = np.linalg.svd(cov)
    d = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[2] = -1.0
    r = u @ np.diag(d) @ vt
    scale = 1.0
    if with_scale:
        var_s = float(np.sum(src**2)) / len(source)
        scale = float(np.dot(sigma, d)) / var_s
    t = mu_t - scale * (r @ mu_s)
    return SimilarityTransform.from_matrix(r, t, scale)


def icp_register(
    source: PointCloud, target: PointCloud, init: RigidTransform, params: IcpParams | None = None
) -> RegistrationResult:
    """Point-to-point ICP from a supplied initial alignment

    Each iteration pairs every transformed source point with its nearest target point (pairs farther than the
    cutoff are ignored) and solves the rigid update in closed form. An update is accepted only if it does not
    increase the mean residual, which makes the residual sequence monotone.

    :param source: Moving cloud
    :param target: Fixed cloud
    :param init: Manual initial alignment of source onto target
    :param params: Iteration and correspondence settings
    :raises InitializationTooFar: No source point has a target neighbour within the cutoff under init
    """
    params = params or IcpParams()
    if not len(source) or not len(target):
        raise ValueError("source/target: Point clouds must be non-empty")
    tree = cKDTree(target.points)
    cutoff = params.correspondence_cutoff_mm

    def residual_of(transform: RigidTransform) -> tuple[float, FloatArray, FloatArray]:
        moved = transform.apply(source.points)
        dist, idx = tree.query(moved, distance_upper_bound=cutoff)
        paired = np.isfinite(dist) & (dist <= cutoff)
        if not paired.any():
            return math.inf, moved[paired], np.empty((0, 3))
        return float(np.mean(dist[paired])), moved[paired], target.points[idx[paired]]

    current = init
    residual, moved, matched = residual_of(current)
    if not math.isfinite(residual):
        raise InitializationTooFar(
            f"No source point lies within {cutoff} mm of the target under the initial transform"
        )
    history = [residual]
    iterations = 0
    for _ in range(params.max_iterations):
        iterations += 1
        if len(moved) < 3:
            break
        step = fit_similarity(moved, matched, with_scale=False).rigid_part()
        candidate = compose(step, current)
        new_residual, new_moved, new_matched = residual_of(candidate)
        if not new_residual <= residual:
            break
        delta = residual - new_residual
        current, residual, moved, matched = candidate, new_residual, new_moved, new_matched
        history.append(residual)
        logger.debug(f"ICP iteration {iterations}: mean residual {residual:.6f} mm")
        if delta < params.convergence_delta_mm:
            break

    logger.info(f"ICP finished after {iterations} iteration(s) with mean residual {residual:.4f} mm")
    return RegistrationResult(
        transform=current,
        mean_residual_mm=residual,
        iterations_used=iterations,
        residual_history=tuple(history),
    )


def align_fiducials(
    source: Any,
    target: Any,
    *,
    with_scale: bool = True,
    inlier_threshold_mm: float = DEFAULT_FIDUCIAL_INLIER_THRESHOLD_MM,
    iterations: int = DEFAULT_FIDUCIAL_RANSAC_ITERATIONS,
    seed: int = 0,
) -> SimilarityTransform:
    """Robustly align paired points: RANSAC over minimal 3-pair samples, then a least-squares fit on the inliers

    :param source: (N, 3) source points
    :param target: (N, 3) target points paired with source
    :param with_scale: Solve for a uniform scale; otherwise the returned scale is exactly 1
    :param inlier_threshold_mm: Residual below which a pair counts as an inlier
    :param iterations: Number of minimal samples drawn
    :param seed: RNG seed
    :raises DegenerateFiducials: Fewer than 3 pairs, or all pairs collinear
    """
    src = as_points(source, name="source")
    tgt = as_points(target, name="target")
    if len(src) != len(tgt):
        raise ValueError(f"source/target: Pair counts differ ({len(src)} vs {len(tgt)})")
    if len(src) < 3:
        raise DegenerateFiducials(f"At least 3 fiducial pairs are required, but got {len(src)}")
    if _is_collinear(src) or _is_collinear(tgt):
        raise DegenerateFiducials("Fiducial points are collinear; the rotation is undetermined")

    def fit(idx: Any) -> SimilarityTransform:
        return fit_similarity(src[idx], tgt[idx], with_scale=with_scale)

    best = fit(np.arange(len(src)))
    best_inliers = np.linalg.norm(best.apply(src) - tgt, axis=1) < inlier_threshold_mm
    if not best_inliers.all() and len(src) > 3:
        rng = np.random.default_rng(seed)
        best_count, best_error = int(best_inliers.sum()), math.inf
        for _ in range(iterations):
            sample = rng.choice(len(src), size=3, replace=False)
            if _is_collinear(src[sample]):
                continue
            candidate = fit(sample)
            errors = np.linalg.norm(candidate.apply(src) - tgt, axis=1)
            inliers = errors < inlier_threshold_mm
            count = int(inliers.sum())
            error = float(errors[inliers].mean()) if count else math.inf
            if count > best_count or (count == best_count and error < best_error):
                best_count, best_error, best_inliers = count, error, inliers
        if best_inliers.sum() >= 3 and not _is_collinear(src[best_inliers]):
            best = fit(np.flatnonzero(best_inliers))
        logger.debug(f"Fiducial RANSAC kept {int(best_inliers.sum())} of {len(src)} pairs")
    return best


def load_point_cloud(path: Path) -> PointCloud:
    data = read_file(path)
    if not isinstance(data, PlyData):
        raise MeshFormatError(f"{path.name}: Expected a PLY file")
    cloud = PointCloud(data.points())
    logger.info(f"Loaded {path.name}: {len(cloud)} points")
    return cloud


def save_point_cloud(path: Path, cloud: PointCloud) -> None:
    write_ply(path, cloud.points)


def _is_collinear(points: FloatArray) -> bool:
    centered = points - points.mean(axis=0)
    sigma = np.linalg.svd(centered, compute_uv=False)
    return bool(sigma[0] == 0 or sigma[1] <= _COLLINEAR_TOLERANCE * sigma[0])
