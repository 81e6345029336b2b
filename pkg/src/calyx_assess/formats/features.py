"""Text features files, one per video.

Each frame is a block of comma-separated records::

    F,<frame_id>,<timestamp_s>,<n_keypoints>,<g_1>,...,<g_D>
    P,<qw>,<qx>,<qy>,<qz>,<tx_mm>,<ty_mm>,<tz_mm>          (reference frames only)
    K,<u>,<v>,<d_1>,...,<d_d>,<point_id or -1>             (n_keypoints times)

Lines starting with ``#`` and blank lines are ignored.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import IO

import numpy as np

from calyx_assess.constants import DEFAULT_ENCODING
from calyx_assess.exceptions import InputFormatError
from calyx_assess.geometry.transforms import RigidTransform
from calyx_assess.paths import compression_aware_open
from calyx_assess.types import Keypoints, QueryFrame, ReferenceFrame

__all__ = ["read_features", "write_features"]

FeatureFrame = QueryFrame | ReferenceFrame


class _FrameBuilder:
    __slots__ = ("frame_id", "global_descriptor", "kp_lines", "line_no", "n_keypoints", "pose", "timestamp")

    def __init__(self, tokens: list[str], line_no: int) -> None:
        if len(tokens) < 5:
            raise InputFormatError(f"line {line_no}: Frame record needs frame_id, timestamp, n_keypoints, descriptor")
        try:
            self.frame_id = int(tokens[1])
            self.timestamp = float(tokens[2])
            self.n_keypoints = int(tokens[3])
            self.global_descriptor = np.array(tokens[4:], dtype=np.float64)
        except ValueError as e:
            raise InputFormatError(f"line {line_no}: {e}") from None
        self.line_no = line_no
        self.pose: RigidTransform | None = None
        self.kp_lines: list[list[str]] = []

    def build(self, descriptor_dim: int | None) -> FeatureFrame:
        if len(self.kp_lines) != self.n_keypoints:
            raise InputFormatError(
                f"line {self.line_no}: Frame {self.frame_id} declares {self.n_keypoints} keypoints, "
                f"but {len(self.kp_lines)} follow"
            )
        if self.kp_lines:
            widths = {len(t) for t in self.kp_lines}
            if len(widths) != 1:
                raise InputFormatError(f"line {self.line_no}: Frame {self.frame_id} has keypoints of mixed width")
            try:
                table = np.array(self.kp_lines, dtype=np.float64)
            except ValueError as e:
                raise InputFormatError(f"line {self.line_no}: Frame {self.frame_id}: {e}") from None
            ids = table[:, -1]
            if not np.array_equal(ids, np.round(ids)):
                raise InputFormatError(f"line {self.line_no}: Frame {self.frame_id}: point ids must be integers")
            keypoints = Keypoints(pixels=table[:, 0:2], descriptors=table[:, 2:-1], point_ids=ids.astype(np.int64))
        else:
            keypoints = Keypoints.empty(descriptor_dim or 0)
        try:
            if self.pose is not None:
                return ReferenceFrame(
                    frame_id=self.frame_id,
                    timestamp=self.timestamp,
                    pose=self.pose,
                    global_descriptor=self.global_descriptor,
                    keypoints=keypoints,
                )
            return QueryFrame(
                frame_id=self.frame_id,
                timestamp=self.timestamp,
                global_descriptor=self.global_descriptor,
                keypoints=keypoints,
            )
        except (TypeError, ValueError) as e:
            raise InputFormatError(f"line {self.line_no}: Frame {self.frame_id}: {e}") from None


def read_features(f: IO[str]) -> list[FeatureFrame]:
    """Parse a features file. Frames with a pose record become ReferenceFrames, the others QueryFrames

    :param f: File object opened in text mode
    """
    frames: list[FeatureFrame] = []
    current: _FrameBuilder | None = None
    descriptor_dim: int | None = None
    global_dim: int | None = None

    def finish() -> None:
        nonlocal descriptor_dim
        if current is None:
            return
        frame = current.build(descriptor_dim)
        if len(frame.keypoints):
            if descriptor_dim is None:
                descriptor_dim = frame.keypoints.descriptor_dim
            elif frame.keypoints.descriptor_dim != descriptor_dim:
                raise InputFormatError(
                    f"line {current.line_no}: Frame {current.frame_id} has descriptor dimension "
                    f"{frame.keypoints.descriptor_dim}, expected {descriptor_dim}"
                )
        frames.append(frame)

    for line_no, raw in enumerate(f, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = [t.strip() for t in line.split(",")]
        tag = tokens[0]
        if tag == "F":
            finish()
            current = _FrameBuilder(tokens, line_no)
            if global_dim is None:
                global_dim = len(current.global_descriptor)
            elif len(current.global_descriptor) != global_dim:
                raise InputFormatError(
                    f"line {line_no}: Global descriptor dimension {len(current.global_descriptor)}, "
                    f"expected {global_dim}"
                )
        elif current is None:
            raise InputFormatError(f"line {line_no}: {tag!r} record before the first frame record")
        elif tag == "P":
            if len(tokens) != 8 or current.kp_lines or current.pose is not None:
                raise InputFormatError(f"line {line_no}: Pose record must directly follow its frame record")
            try:
                values = [float(t) for t in tokens[1:]]
                rotation, translation = tuple(values[:4]), tuple(values[4:])
                current.pose = RigidTransform(rotation=rotation, translation=translation)  # type: ignore[arg-type]
            except ValueError as e:
                raise InputFormatError(f"line {line_no}: {e}") from None
        elif tag == "K":
            if len(tokens) < 5:
                raise InputFormatError(f"line {line_no}: Keypoint record needs u, v, a descriptor and a point id")
            current.kp_lines.append(tokens[1:])
        else:
            raise InputFormatError(f"line {line_no}: Unknown record tag {tag!r}")
    finish()
    return frames


def write_features(path: Path, frames: Iterable[FeatureFrame], *, header: Sequence[str] = ()) -> None:
    """Write frames to a features file

    :param path: Output path
    :param frames: Query and/or reference frames
    :param header: Comment lines written at the top of the file
    """
    with compression_aware_open(path, mode="w", encoding=DEFAULT_ENCODING, newline="\n") as f:
        for line in header:
            f.write(f"# {line}\n")
        for frame in frames:
            kps = frame.keypoints
            g = ",".join(repr(x) for x in frame.global_descriptor.tolist())
            f.write(f"F,{frame.frame_id},{frame.timestamp!r},{len(kps)},{g}\n")
            if isinstance(frame, ReferenceFrame):
                pose = frame.pose
                f.write("P," + ",".join(repr(x) for x in (*pose.rotation, *pose.translation)) + "\n")
            rows = np.concatenate([kps.pixels, kps.descriptors], axis=1).tolist()
            for row, pid in zip(rows, kps.point_ids.tolist()):
                f.write("K," + ",".join(repr(x) for x in row) + f",{pid}\n")
