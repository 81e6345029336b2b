from __future__ import annotations

import dataclasses
import logging
from collections.abc import Sequence

import numpy as np

from calyx_assess.exceptions import NonMonotonicTimestamps, WatertightnessRequired
from calyx_assess.geometry.mesh import TriMesh
from calyx_assess.types import FrameStatus, LocalizedFrame
from calyx_assess.validators import validate_positive

__all__ = ["check_timestamps", "spatial_filter", "temporal_filter"]

logger = logging.getLogger(__name__)


def check_timestamps(timestamps: Sequence[float]) -> None:
    """Raise NonMonotonicTimestamps unless the timestamps strictly increase"""
    ts = np.asarray(timestamps, dtype=np.float64)
    bad = np.flatnonzero(np.diff(ts) <= 0)
    if len(bad):
        i = int(bad[0])
        raise NonMonotonicTimestamps(f"Timestamps must strictly increase, but {ts[i + 1]!r} follows {ts[i]!r}")


def spatial_filter(frames: Sequence[LocalizedFrame], mesh: TriMesh) -> list[LocalizedFrame]:
    """Reject accepted frames whose camera center lies outside the mesh

    :param frames: Localized frames
    :param mesh: Watertight cavity surface
    """
    if not mesh.is_watertight:
        raise WatertightnessRequired("The spatial filter requires a watertight mesh")
    out = list(frames)
    idx = [i for i, fr in enumerate(out) if fr.status == FrameStatus.ACCEPTED]
    if not idx:
        return out
    centers = np.array([out[i].camera_center for i in idx])
    inside = mesh.contains(centers)
    for i, ok in zip(idx, inside.tolist()):
        if not ok:
            out[i] = dataclasses.replace(out[i], status=FrameStatus.REJECTED_SPATIAL)
    rejected = len(idx) - int(inside.sum())
    if rejected:
        logger.debug(f"Spatial filter rejected {rejected} of {len(idx)} frames")
    return out


def temporal_filter(frames: Sequence[LocalizedFrame], v_max_mm_per_s: float) -> list[LocalizedFrame]:
    """Reject accepted frames that move faster than v_max from the last kept frame.

    A single forward pass; the first accepted frame is always kept and rejected frames never become the anchor.

    :param frames: Localized frames in time order
    :param v_max_mm_per_s: Velocity bound
    """
    validate_positive("v_max_mm_per_s", v_max_mm_per_s)
    check_timestamps([fr.timestamp for fr in frames])
    out = list(frames)
    anchor: LocalizedFrame | None = None
    rejected = 0
    for i, fr in enumerate(out):
        if fr.status != FrameStatus.ACCEPTED:
            continue
        if anchor is not None:
            assert fr.camera_center is not None and anchor.camera_center is not None
            displacement = float(np.linalg.norm(fr.camera_center - anchor.camera_center))
            if displacement > v_max_mm_per_s * (fr.timestamp - anchor.timestamp):
                out[i] = dataclasses.replace(fr, status=FrameStatus.REJECTED_TEMPORAL)
                rejected += 1
                continue
        anchor = fr
    if rejected:
        logger.debug(f"Temporal filter rejected {rejected} frames")
    return out
