from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from tqdm import tqdm

from calyx_assess.geometry.camera import PinholeCamera
from calyx_assess.geometry.mesh import TriMesh
from calyx_assess.localization.absolute_pose import AbsolutePoseFailure, estimate_absolute_pose
from calyx_assess.localization.essential import verify_pair_essential
from calyx_assess.localization.filters import check_timestamps, spatial_filter, temporal_filter
from calyx_assess.localization.matching import match_descriptors
from calyx_assess.localization.model import ReferenceModel
from calyx_assess.localization.retrieval import retrieve_candidates
from calyx_assess.phantom import LabeledMesh
from calyx_assess.types import FrameStatus, LocalizationParams, LocalizedFrame, QueryFrame

__all__ = ["frame_rng", "localize_frame", "localize_video", "pool_correspondences", "status_counts"]

logger = logging.getLogger(__name__)


def frame_rng(rng_seed: int, frame_id: int) -> np.random.Generator:
    """Random generator owned by one frame, independent of processing order"""
    return np.random.default_rng(np.random.SeedSequence([rng_seed, frame_id]))


def pool_correspondences(
    q: QueryFrame,
    model: ReferenceModel,
    camera: PinholeCamera,
    params: LocalizationParams,
    rng: np.random.Generator,
) -> dict[int, int]:
    """Collect query keypoint -> 3D point links from every verified reference candidate.

    Candidates are visited from most to least similar, so a query keypoint linked by several pairs keeps the link
    from the most similar reference frame.
    """
    links: dict[int, int] = {}
    if not len(q.keypoints):
        return links
    for frame_id, similarity in retrieve_candidates(q, model, params.retrieval_k):
        ref = model.frame(frame_id)
        if not len(ref.keypoints):
            continue
        matches = match_descriptors(q.keypoints.descriptors, ref.keypoints.descriptors, params.ratio_test)
        verification = verify_pair_essential(matches, q.keypoints, ref.keypoints, camera, params, rng)
        if not verification.accepted:
            logger.debug(
                f"frame {q.frame_id}: reference {frame_id} (similarity {similarity:.3f}) rejected: "
                f"{verification.reason}"
            )
            continue
        for q_idx, r_idx in matches[verification.inlier_mask].tolist():
            point_id = int(ref.keypoints.point_ids[r_idx])
            if point_id >= 0:
                links.setdefault(q_idx, point_id)
    return links


def localize_frame(
    q: QueryFrame, model: ReferenceModel, camera: PinholeCamera, params: LocalizationParams
) -> LocalizedFrame:
    """Localize one query frame. The result is ACCEPTED with a pose, or UNLOCALIZED"""
    rng = frame_rng(params.rng_seed, q.frame_id)
    links = pool_correspondences(q, model, camera, params, rng)
    q_idx = np.array(sorted(links), dtype=np.int64)
    point_ids = np.array([links[i] for i in q_idx.tolist()], dtype=np.int64)
    result = estimate_absolute_pose(q.keypoints.pixels[q_idx], model.cloud.points[point_ids], camera, params, rng)
    if isinstance(result, AbsolutePoseFailure):
        logger.debug(f"frame {q.frame_id}: unlocalized ({result.reason}, {len(q_idx)} correspondences)")
        return LocalizedFrame(frame_id=q.frame_id, timestamp=q.timestamp, status=FrameStatus.UNLOCALIZED)
    logger.debug(f"frame {q.frame_id}: localized with {result.inlier_count}/{len(q_idx)} inliers")
    return LocalizedFrame(
        frame_id=q.frame_id,
        timestamp=q.timestamp,
        status=FrameStatus.ACCEPTED,
        pose=result.pose,
        inlier_count=result.inlier_count,
        inlier_ratio=result.inlier_count / len(q_idx),
    )


def localize_video(
    query: Sequence[QueryFrame],
    model: ReferenceModel,
    mesh: LabeledMesh | TriMesh,
    camera: PinholeCamera,
    params: LocalizationParams,
    *,
    workers: int = 1,
    progress: bool = False,
) -> list[LocalizedFrame]:
    """Localize every frame of a query video, then apply the spatial and temporal filters

    :param query: Query frames in time order
    :param model: Reference model registered into the mesh frame
    :param mesh: Cavity surface used by the spatial filter
    :param camera: Camera intrinsics
    :param params: Localization parameters
    :param workers: Number of threads localizing frames concurrently
    :param progress: Show a progress bar
    """
    check_timestamps([q.timestamp for q in query])
    surface = mesh.mesh if isinstance(mesh, LabeledMesh) else mesh
    if not query:
        logger.warning("Query video has no frames")
        return []

    def localize(q: QueryFrame) -> LocalizedFrame:
        return localize_frame(q, model, camera, params)

    bar = tqdm(total=len(query), desc="Localizing", unit="frame", disable=not progress)
    with bar:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                frames = list(_tick(executor.map(localize, query), bar))
        else:
            frames = list(_tick(map(localize, query), bar))

    frames = spatial_filter(frames, surface)
    frames = temporal_filter(frames, params.v_max_mm_per_s)
    counts = status_counts(frames)
    logger.info(
        f"Localized {len(frames)} frames: " + ", ".join(f"{status} {counts[status]}" for status in FrameStatus)
    )
    return frames


def status_counts(frames: Iterable[LocalizedFrame]) -> dict[FrameStatus, int]:
    """Number of frames per status, with every status present"""
    counts = Counter(fr.status for fr in frames)
    return {status: counts.get(status, 0) for status in FrameStatus}


def _tick(results: Iterable[LocalizedFrame], bar: tqdm) -> Iterable[LocalizedFrame]:
    for fr in results:
        bar.update()
        yield fr
