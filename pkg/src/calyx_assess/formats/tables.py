"""CSV tables: localized trajectories, ground-truth poses and fiducial pairs"""

from __future__ import annotations

import csv
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from calyx_assess.arrays import FloatArray
from calyx_assess.constants import DEFAULT_ENCODING
from calyx_assess.exceptions import InputFormatError
from calyx_assess.formats.reader import read_file
from calyx_assess.geometry.transforms import RigidTransform
from calyx_assess.paths import compression_aware_open
from calyx_assess.types import FrameStatus, LocalizedFrame, PosedFrame

__all__ = [
    "FIDUCIAL_COLUMNS",
    "POSE_COLUMNS",
    "TRAJECTORY_COLUMNS",
    "read_fiducial_pairs",
    "read_poses",
    "read_trajectory",
    "write_fiducial_pairs",
    "write_poses",
    "write_trajectory",
]

TRAJECTORY_COLUMNS = (
    "frame_id", "timestamp_s", "status", "qw", "qx", "qy", "qz", "tx_mm", "ty_mm", "tz_mm", "inlier_count",
    "inlier_ratio",
)  # fmt: skip
POSE_COLUMNS = ("frame_id", "timestamp_s", "qw", "qx", "qy", "qz", "tx_mm", "ty_mm", "tz_mm")
FIDUCIAL_COLUMNS = ("sx", "sy", "sz", "tx", "ty", "tz")


def write_trajectory(path: Path, frames: Iterable[LocalizedFrame]) -> None:
    """Write localized frames. Pose columns are empty for unlocalized frames"""
    rows = []
    for fr in frames:
        pose_cols: list[Any] = [*fr.pose.rotation, *fr.pose.translation] if fr.pose is not None else [""] * 7
        rows.append([fr.frame_id, fr.timestamp, str(fr.status), *pose_cols, fr.inlier_count, fr.inlier_ratio])
    _write_rows(path, TRAJECTORY_COLUMNS, rows)


def read_trajectory(path: Path) -> list[LocalizedFrame]:
    frames = []
    for line_no, row in _read_rows(path, TRAJECTORY_COLUMNS):
        try:
            status = FrameStatus(row["status"])
            pose = _pose_from_row(row) if row["qw"] else None
            frames.append(
                LocalizedFrame(
                    frame_id=int(row["frame_id"]),
                    timestamp=float(row["timestamp_s"]),
                    status=status,
                    pose=pose,
                    inlier_count=int(row["inlier_count"]),
                    inlier_ratio=float(row["inlier_ratio"]),
                )
            )
        except ValueError as e:
            raise InputFormatError(f"{path.name} line {line_no}: {e}") from None
    return frames


def write_poses(path: Path, frames: Iterable[PosedFrame]) -> None:
    rows = [[fr.frame_id, fr.timestamp, *fr.pose.rotation, *fr.pose.translation] for fr in frames]
    _write_rows(path, POSE_COLUMNS, rows)


def read_poses(path: Path) -> list[PosedFrame]:
    """Read a ground-truth trajectory (camera-from-world poses)"""
    frames = []
    for line_no, row in _read_rows(path, POSE_COLUMNS):
        try:
            frames.append(
                PosedFrame(frame_id=int(row["frame_id"]), timestamp=float(row["timestamp_s"]), pose=_pose_from_row(row))
            )
        except ValueError as e:
            raise InputFormatError(f"{path.name} line {line_no}: {e}") from None
    return frames


def write_fiducial_pairs(path: Path, source: FloatArray, target: FloatArray) -> None:
    rows = np.concatenate([np.asarray(source).reshape(-1, 3), np.asarray(target).reshape(-1, 3)], axis=1)
    _write_rows(path, FIDUCIAL_COLUMNS, rows.tolist())


def read_fiducial_pairs(path: Path) -> tuple[FloatArray, FloatArray]:
    """Read fiducial pairs as (source (N, 3), target (N, 3))"""
    values = []
    for line_no, row in _read_rows(path, FIDUCIAL_COLUMNS):
        try:
            values.append([float(row[c]) for c in FIDUCIAL_COLUMNS])
        except ValueError as e:
            raise InputFormatError(f"{path.name} line {line_no}: {e}") from None
    table = np.asarray(values, dtype=np.float64).reshape(-1, 6)
    return table[:, :3], table[:, 3:]


def _pose_from_row(row: dict[str, str]) -> RigidTransform:
    return RigidTransform(
        rotation=(float(row["qw"]), float(row["qx"]), float(row["qy"]), float(row["qz"])),
        translation=(float(row["tx_mm"]), float(row["ty_mm"]), float(row["tz_mm"])),
    )


def _read_rows(path: Path, columns: Sequence[str]) -> list[tuple[int, dict[str, str]]]:
    rows: list[dict[str, str]] = read_file(path)
    if rows:
        missing = [c for c in columns if c not in rows[0]]
        if missing:
            raise InputFormatError(f"{path.name}: Missing column(s) {', '.join(missing)}")
    # line 1 is the header
    return [(i + 2, row) for i, row in enumerate(rows)]


def _write_rows(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with compression_aware_open(path, mode="w", encoding=DEFAULT_ENCODING, newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
