"""Absolute camera pose from 2D-3D correspondences.

RANSAC draws four correspondences per hypothesis, solves the minimal three-point problem with OpenCV and keeps
the solution that best reprojects the fourth point. The best hypothesis is refined with Levenberg-Marquardt on the
reprojection residuals of its inliers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import cv2
import numpy as np
from scipy.optimize import least_squares

from calyx_assess.arrays import BoolArray, FloatArray, IntArray
from calyx_assess.constants import DEFAULT_MIN_PNP_ITERATIONS, DEFAULT_RANSAC_BATCH_SIZE, DEFAULT_RANSAC_CONFIDENCE
from calyx_assess.geometry.camera import PinholeCamera
from calyx_assess.geometry.transforms import RigidTransform
from calyx_assess.localization.ransac import draw_samples, required_iterations
from calyx_assess.types import LocalizationParams, PoseFailureReason

__all__ = ["AbsolutePose", "AbsolutePoseFailure", "estimate_absolute_pose", "reprojection_errors"]

logger = logging.getLogger(__name__)

_SAMPLE_SIZE = 4
_LM_TOLERANCE = 1e-12


@dataclass(frozen=True, kw_only=True, slots=True, eq=False)
class AbsolutePose:
    pose: RigidTransform
    inlier_mask: BoolArray
    ransac_rms_px: float
    refined_rms_px: float

    @property
    def inlier_count(self) -> int:
        return int(self.inlier_mask.sum())


@dataclass(frozen=True, slots=True)
class AbsolutePoseFailure:
    reason: PoseFailureReason


def reprojection_errors(
    rotation: FloatArray, translation: FloatArray, points: FloatArray, pixels: FloatArray, camera: PinholeCamera
) -> FloatArray:
    """Pixel distance between each observed pixel and the projection of its point; inf behind the camera"""
    p_cam = points @ rotation.T + translation
    z = p_cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        du = camera.fx * p_cam[:, 0] / z + camera.cx - pixels[:, 0]
        dv = camera.fy * p_cam[:, 1] / z + camera.cy - pixels[:, 1]
        err = np.hypot(du, dv)
    return np.where(z > 0, err, np.inf)


def _solve_minimal(
    sample: IntArray, points: FloatArray, pixels: FloatArray, camera: PinholeCamera, k: FloatArray
) -> tuple[FloatArray, FloatArray] | None:
    idx = sample[:3]
    try:
        n_solutions, rvecs, tvecs = cv2.solveP3P(
            np.ascontiguousarray(points[idx]).reshape(3, 1, 3),
            np.ascontiguousarray(pixels[idx]).reshape(3, 1, 2),
            k,
            None,
            flags=cv2.SOLVEPNP_P3P,
        )
    except cv2.error:
        return None
    best: tuple[FloatArray, FloatArray] | None = None
    best_err = math.inf
    for rvec, tvec in zip(rvecs[:n_solutions], tvecs[:n_solutions]):
        r = RigidTransform.from_rotvec(np.ravel(rvec)).matrix
        t = np.ravel(tvec).astype(np.float64)
        err = reprojection_errors(r, t, points[sample], pixels[sample], camera)
        if np.all(np.isfinite(err)) and err[-1] < best_err:
            best, best_err = (r, t), float(err[-1])
    return best


def _refine(
    rotation: FloatArray, translation: FloatArray, points: FloatArray, pixels: FloatArray, camera: PinholeCamera
) -> tuple[FloatArray, FloatArray]:
    start = RigidTransform.from_matrix(rotation, translation)

    def residuals(x: FloatArray) -> FloatArray:
        pose = RigidTransform.from_rotvec(x[:3], x[3:])
        p_cam = pose.apply(points)
        u = camera.fx * p_cam[:, 0] / p_cam[:, 2] + camera.cx
        v = camera.fy * p_cam[:, 1] / p_cam[:, 2] + camera.cy
        return np.concatenate([u - pixels[:, 0], v - pixels[:, 1]])

    x0 = np.concatenate([start.rotvec(), start.translation_vector])
    result = least_squares(residuals, x0, method="lm", xtol=_LM_TOLERANCE, ftol=_LM_TOLERANCE, gtol=_LM_TOLERANCE)
    refined = RigidTransform.from_rotvec(result.x[:3], result.x[3:])
    return refined.matrix, refined.translation_vector


def _rms(err: FloatArray) -> float:
    return float(np.sqrt(np.mean(err**2)))


def estimate_absolute_pose(
    pixels: FloatArray,
    points: FloatArray,
    camera: PinholeCamera,
    params: LocalizationParams,
    rng: np.random.Generator,
) -> AbsolutePose | AbsolutePoseFailure:
    """Estimate a camera-from-world pose from pixel/point correspondences

    Inliers are correspondences in front of the camera whose reprojection error is below
    pnp_reprojection_threshold_px.

    :param pixels: (N, 2) observed pixels
    :param points: (N, 3) world points in mm
    :param camera: Camera intrinsics
    :param params: Localization parameters
    :param rng: Random generator driving the sampling
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pixels)
    if n < _SAMPLE_SIZE:
        return AbsolutePoseFailure(PoseFailureReason.TOO_FEW_CORRESPONDENCES)

    threshold = params.pnp_reprojection_threshold_px
    k = np.array(camera.K)
    best: tuple[FloatArray, FloatArray] | None = None
    best_count = 0
    limit = params.ransac_iterations
    done = 0
    while done < limit:
        batch = min(DEFAULT_RANSAC_BATCH_SIZE, limit - done)
        for sample in draw_samples(rng, n, _SAMPLE_SIZE, batch):
            done += 1
            solution = _solve_minimal(sample, points, pixels, camera, k)
            if solution is None:
                continue
            count = int(np.count_nonzero(reprojection_errors(*solution, points, pixels, camera) < threshold))
            if count > best_count:
                best, best_count = solution, count
                needed = required_iterations(
                    best_count / n, _SAMPLE_SIZE, DEFAULT_RANSAC_CONFIDENCE, params.ransac_iterations
                )
                limit = min(limit, max(needed, DEFAULT_MIN_PNP_ITERATIONS))
            if done >= limit:
                break

    if best is None:
        return AbsolutePoseFailure(PoseFailureReason.NO_SOLUTION)
    if best_count < params.min_inlier_count:
        logger.debug(f"PnP RANSAC: {best_count}/{n} inliers after {done} samples, below the minimum")
        return AbsolutePoseFailure(PoseFailureReason.TOO_FEW_INLIERS)

    rotation, translation = best
    ransac_mask = reprojection_errors(rotation, translation, points, pixels, camera) < threshold
    ransac_rms = _rms(reprojection_errors(rotation, translation, points[ransac_mask], pixels[ransac_mask], camera))
    refined_rms = ransac_rms
    if best_count >= 3:
        r_ref, t_ref = _refine(rotation, translation, points[ransac_mask], pixels[ransac_mask], camera)
        rms = _rms(reprojection_errors(r_ref, t_ref, points[ransac_mask], pixels[ransac_mask], camera))
        if rms <= ransac_rms:
            rotation, translation, refined_rms = r_ref, t_ref, rms

    mask = reprojection_errors(rotation, translation, points, pixels, camera) < threshold
    if int(mask.sum()) < params.min_inlier_count:
        return AbsolutePoseFailure(PoseFailureReason.TOO_FEW_INLIERS)
    logger.debug(f"PnP RANSAC: {int(mask.sum())}/{n} inliers after {done} samples, rms {refined_rms:.3f}px")
    return AbsolutePose(
        pose=RigidTransform.from_matrix(rotation, translation),
        inlier_mask=mask,
        ransac_rms_px=ransac_rms,
        refined_rms_px=refined_rms,
    )
