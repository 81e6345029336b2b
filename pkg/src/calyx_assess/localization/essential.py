"""Two-view verification of putative matches with a RANSAC essential matrix.

Matched pixels are mapped to normalized image coordinates with the camera intrinsics, models are fitted with the
normalized 8-point algorithm and scored with the Sampson distance. The pixel threshold is converted to normalized
units by dividing by the mean focal length.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from calyx_assess.arrays import BoolArray, FloatArray, IntArray
from calyx_assess.constants import DEFAULT_RANSAC_BATCH_SIZE, DEFAULT_RANSAC_CONFIDENCE
from calyx_assess.geometry.camera import PinholeCamera
from calyx_assess.localization.ransac import draw_samples, required_iterations
from calyx_assess.types import Keypoints, LocalizationParams, RejectReason

__all__ = ["PairVerification", "fit_essential", "sampson_distances", "verify_pair_essential"]

logger = logging.getLogger(__name__)

_SAMPLE_SIZE = 8


@dataclass(frozen=True, kw_only=True, slots=True, eq=False)
class PairVerification:
    """Outcome of verifying one query/reference pair. reason is None iff the pair is accepted"""

    inlier_mask: BoolArray
    inlier_count: int
    inlier_ratio: float
    reason: RejectReason | None = None
    essential: FloatArray | None = None

    @property
    def accepted(self) -> bool:
        return self.reason is None


def _hartley(x: FloatArray) -> FloatArray:
    """Similarity moving the points' centroid to the origin with mean distance sqrt(2)"""
    centroid = x.mean(axis=0)
    mean_dist = float(np.mean(np.linalg.norm(x - centroid, axis=1)))
    s = np.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def _homogeneous(x: FloatArray) -> FloatArray:
    return np.hstack([x, np.ones((len(x), 1))])


def fit_essential(x1: FloatArray, x2: FloatArray, samples: IntArray | None = None) -> FloatArray:
    """Fit essential matrices E with x2^T E x1 = 0 using the normalized 8-point algorithm

    :param x1: (N, 2) normalized coordinates in the first view
    :param x2: (N, 2) normalized coordinates in the second view
    :param samples: (B, s) index sets with s >= 8, one model per row; all points when omitted
    :returns: (B, 3, 3) essential matrices with singular values (1, 1, 0)
    """
    if samples is None:
        samples = np.arange(len(x1))[None, :]
    t1 = _hartley(x1)
    t2 = _hartley(x2)
    h1 = _homogeneous(x1) @ t1.T
    h2 = _homogeneous(x2) @ t2.T
    p1 = h1[samples]
    p2 = h2[samples]
    # rows of the linear system: kron(x2, x1)
    a = np.einsum("bni,bnj->bnij", p2, p1).reshape(len(samples), samples.shape[1], 9)
    # a reduced SVD only yields the null vector once there are at least 9 rows
    _, _, vt = np.linalg.svd(a, full_matrices=samples.shape[1] < 9)
    e_norm = vt[:, -1, :].reshape(-1, 3, 3)
    e = np.einsum("ji,bjk,kl->bil", t2, e_norm, t1)
    u, _, vt_e = np.linalg.svd(e)
    return np.einsum("bij,j,bjk->bik", u, np.array([1.0, 1.0, 0.0]), vt_e)


def sampson_distances(e: FloatArray, x1: FloatArray, x2: FloatArray) -> FloatArray:
    """First-order geometric error of each correspondence under each model

    :param e: (B, 3, 3) essential matrices
    :param x1: (N, 2) normalized coordinates in the first view
    :param x2: (N, 2) normalized coordinates in the second view
    :returns: (B, N) distances; NaN where the error is undefined
    """
    h1 = _homogeneous(x1)
    h2 = _homogeneous(x2)
    ex1 = np.einsum("bij,nj->bni", e, h1)
    etx2 = np.einsum("bji,nj->bni", e, h2)
    num = np.einsum("ni,bni->bn", h2, ex1) ** 2
    den = ex1[..., 0] ** 2 + ex1[..., 1] ** 2 + etx2[..., 0] ** 2 + etx2[..., 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(num / den)


def _inliers(e: FloatArray, x1: FloatArray, x2: FloatArray, threshold: float) -> BoolArray:
    with np.errstate(invalid="ignore"):
        return sampson_distances(e, x1, x2) < threshold


def verify_pair_essential(
    matches: IntArray,
    q_kps: Keypoints,
    r_kps: Keypoints,
    camera: PinholeCamera,
    params: LocalizationParams,
    rng: np.random.Generator,
) -> PairVerification:
    """Filter the matches of a query/reference pair and decide whether the pair is usable

    The pair is accepted iff it has at least min_match_count matches, min_inlier_count inliers and an inlier
    ratio of at least min_inlier_ratio.

    :param matches: (M, 2) (query index, reference index) pairs
    :param q_kps: Query keypoints
    :param r_kps: Reference keypoints
    :param camera: Intrinsics of both views
    :param params: Localization parameters
    :param rng: Random generator driving the sampling
    """
    matches = np.asarray(matches, dtype=np.int64).reshape(-1, 2)
    n = len(matches)
    if n < max(_SAMPLE_SIZE, params.min_match_count):
        return PairVerification(
            inlier_mask=np.zeros(n, dtype=bool), inlier_count=0, inlier_ratio=0.0, reason=RejectReason.TOO_FEW_MATCHES
        )

    x1 = camera.normalize(q_kps.pixels[matches[:, 0]])
    x2 = camera.normalize(r_kps.pixels[matches[:, 1]])
    threshold = params.essential_sampson_threshold_px / camera.mean_focal

    best_mask = np.zeros(n, dtype=bool)
    best_count = 0
    best_e: FloatArray | None = None
    limit = params.ransac_iterations
    done = 0
    while done < limit:
        batch = min(DEFAULT_RANSAC_BATCH_SIZE, limit - done)
        models = fit_essential(x1, x2, draw_samples(rng, n, _SAMPLE_SIZE, batch))
        masks = _inliers(models, x1, x2, threshold)
        counts = masks.sum(axis=1)
        top = int(np.argmax(counts))
        if counts[top] > best_count:
            best_count = int(counts[top])
            best_mask = masks[top]
            best_e = models[top]
            limit = min(
                limit,
                required_iterations(best_count / n, _SAMPLE_SIZE, DEFAULT_RANSAC_CONFIDENCE, params.ransac_iterations),
            )
        done += batch

    if best_count >= _SAMPLE_SIZE:
        refit = fit_essential(x1, x2, np.flatnonzero(best_mask)[None, :])
        refit_mask = _inliers(refit, x1, x2, threshold)[0]
        if refit_mask.sum() >= best_count:
            best_mask = refit_mask
            best_count = int(refit_mask.sum())
            best_e = refit[0]

    ratio = best_count / n
    reason: RejectReason | None = None
    if best_count < params.min_inlier_count:
        reason = RejectReason.TOO_FEW_INLIERS
    elif ratio < params.min_inlier_ratio:
        reason = RejectReason.LOW_INLIER_RATIO
    logger.debug(f"Essential RANSAC: {best_count}/{n} inliers after {done} samples ({reason or 'accepted'})")
    return PairVerification(
        inlier_mask=best_mask, inlier_count=best_count, inlier_ratio=ratio, reason=reason, essential=best_e
    )
