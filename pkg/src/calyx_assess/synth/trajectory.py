from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from calyx_assess.arrays import FloatArray
from calyx_assess.constants import DEFAULT_FPS
from calyx_assess.exceptions import UnreachableCalyx
from calyx_assess.geometry.camera import look_at_pose
from calyx_assess.geometry.transforms import RigidTransform, compose
from calyx_assess.synth.phantom import CenterlineTree
from calyx_assess.types import PosedFrame
from calyx_assess.validators import validate_int_list, validate_positive, validate_positive_int

__all__ = ["TrajectorySpec", "generate_trajectory", "perturb_trajectory"]

logger = logging.getLogger(__name__)

# Radius of the pelvis-only sweep relative to the smallest pelvis semi-axis
_SWEEP_RADIUS = 0.5
# Frame count tolerance for durations that are whole multiples of the frame interval
_FRAME_COUNT_SLACK = 1e-9


@dataclass(frozen=True, kw_only=True, slots=True)
class TrajectorySpec:
    """Ground-truth exploration: into each planned calyx and back, dwelling at each tip"""

    visit_plan: tuple[int, ...] = ()
    speed_mm_per_s: float = 20.0
    fps: float = DEFAULT_FPS
    dwell_s: float = 2.0
    pelvis_sweep_s: float = 2.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "visit_plan", validate_int_list("visit_plan", list(self.visit_plan)))
        for name in ("speed_mm_per_s", "fps", "pelvis_sweep_s"):
            object.__setattr__(self, name, validate_positive(name, getattr(self, name)))
        object.__setattr__(self, "dwell_s", validate_positive("dwell_s", self.dwell_s, allow_zero=True))
        validate_positive_int("seed", self.seed, allow_zero=True)


@dataclass(slots=True)
class _Leg:
    start: FloatArray
    end: FloatArray
    duration: float
    direction: FloatArray
    roll: float

    def position(self, t: float) -> FloatArray:
        if self.duration <= 0:
            return self.end.copy()
        frac = min(max(t / self.duration, 0.0), 1.0)
        return self.start + frac * (self.end - self.start)


def _rolled(pose: RigidTransform, roll: float) -> RigidTransform:
    if roll == 0.0:
        return pose
    return compose(RigidTransform.from_rotvec((0.0, 0.0, roll)), pose)


def _plan_legs(tree: CenterlineTree, tspec: TrajectorySpec, rng: np.random.Generator) -> list[_Leg]:
    hub = np.zeros(3)
    legs: list[_Leg] = []
    for calyx_id in tspec.visit_plan:
        axis = tree.axis(calyx_id)
        tip = axis.tip
        direction = np.asarray(axis.direction)
        travel = axis.length_mm / tspec.speed_mm_per_s
        roll = float(rng.uniform(0.0, 2.0 * math.pi))
        legs.append(_Leg(start=hub, end=tip, duration=travel, direction=direction, roll=roll))
        legs.append(_Leg(start=tip, end=tip, duration=tspec.dwell_s, direction=direction, roll=roll))
        legs.append(_Leg(start=tip, end=hub, duration=travel, direction=-direction, roll=roll))
    return legs


def _sweep_frames(tree: CenterlineTree, tspec: TrajectorySpec) -> list[PosedFrame]:
    """Circle inside the pelvis in the xy-plane, looking along the direction of motion"""
    radius = _SWEEP_RADIUS * min(tree.pelvis_semi_axes)
    omega = tspec.speed_mm_per_s / radius
    n = math.ceil(tspec.pelvis_sweep_s * tspec.fps - _FRAME_COUNT_SLACK)
    frames = []
    for k in range(n):
        t = k / tspec.fps
        a = omega * t
        center = radius * np.array([math.cos(a), math.sin(a), 0.0])
        tangent = np.array([-math.sin(a), math.cos(a), 0.0])
        frames.append(PosedFrame(frame_id=k, timestamp=t, pose=look_at_pose(center, tangent)))
    return frames


def generate_trajectory(tree: CenterlineTree, tspec: TrajectorySpec) -> list[PosedFrame]:
    """Sample ground-truth camera poses at 1/fps spacing along the planned exploration

    The camera moves along calyx centerlines at constant speed, looking along its direction of motion, and
    dwells at each calyx tip. An empty plan sweeps a circle inside the pelvis instead.

    :param tree: Centerline tree of the phantom
    :param tspec: Trajectory parameters
    :raises UnreachableCalyx: The plan names a calyx the phantom does not have
    """
    unknown = [c for c in tspec.visit_plan if c not in tree.calyx_ids]
    if unknown:
        raise UnreachableCalyx(f"visit_plan: Calyx ids {unknown} do not exist; the phantom has {tree.calyx_ids}")
    if not tspec.visit_plan:
        return _sweep_frames(tree, tspec)

    rng = np.random.default_rng(np.random.SeedSequence([tspec.seed]))
    legs = _plan_legs(tree, tspec, rng)
    ends = np.cumsum([leg.duration for leg in legs])
    total = float(ends[-1])
    n = math.ceil(total * tspec.fps - _FRAME_COUNT_SLACK)
    frames = []
    for k in range(n):
        t = k / tspec.fps
        i = min(int(np.searchsorted(ends, t, side="right")), len(legs) - 1)
        leg = legs[i]
        start_t = float(ends[i]) - leg.duration
        position = leg.position(t - start_t)
        pose = _rolled(look_at_pose(position, leg.direction), leg.roll)
        frames.append(PosedFrame(frame_id=k, timestamp=t, pose=pose))
    logger.debug(f"Generated trajectory: {n} frames over {total:.2f}s visiting {list(tspec.visit_plan)}")
    return frames


def perturb_trajectory(
    frames: Sequence[PosedFrame], teleport_count: int, teleport_distance_mm: float, seed: int = 0
) -> tuple[list[PosedFrame], tuple[int, ...]]:
    """Displace randomly chosen frames by a fixed distance in random directions.

    The first frame is never displaced.

    :param frames: Ground-truth frames
    :param teleport_count: Number of frames to displace
    :param teleport_distance_mm: Displacement length
    :param seed: Random seed
    :returns: (perturbed frames, sorted positions of the displaced frames)
    """
    validate_positive_int("teleport_count", teleport_count, allow_zero=True)
    validate_positive("teleport_distance_mm", teleport_distance_mm)
    out = list(frames)
    if teleport_count == 0:
        return out, ()
    if teleport_count > len(out) - 1:
        raise ValueError(f"teleport_count: At most {len(out) - 1} frames can be displaced, but got {teleport_count}")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    positions = np.sort(rng.choice(np.arange(1, len(out)), size=teleport_count, replace=False))
    for i in positions.tolist():
        step = rng.normal(size=3)
        step *= teleport_distance_mm / np.linalg.norm(step)
        fr = out[i]
        r = fr.pose.matrix
        moved = RigidTransform.from_matrix(r, fr.pose.translation_vector - r @ step)
        out[i] = PosedFrame(frame_id=fr.frame_id, timestamp=fr.timestamp, pose=moved)
    return out, tuple(int(i) for i in positions)
