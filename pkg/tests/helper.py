import numpy as np

from calyx_assess.geometry.transforms import RigidTransform
from calyx_assess.types import FrameStatus, LocalizedFrame

CUBE_HALF_SIZE_MM = 10.0
CUBE_VERTICES = CUBE_HALF_SIZE_MM * np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=np.float64,
)
# Outward winding, two triangles per side: bottom, top, front, back, left, right
CUBE_FACES = np.array(
    [
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [3, 7, 6],
        [3, 6, 2],
        [0, 4, 7],
        [0, 7, 3],
        [1, 2, 6],
        [1, 6, 5],
    ]
)


def camera_at(center: tuple[float, float, float]) -> RigidTransform:
    """Camera-from-world pose of an unrotated camera at center"""
    return RigidTransform(translation=(-center[0], -center[1], -center[2]))


def accepted_frame(frame_id: int, timestamp: float, center: tuple[float, float, float]) -> LocalizedFrame:
    return LocalizedFrame(frame_id=frame_id, timestamp=timestamp, status=FrameStatus.ACCEPTED, pose=camera_at(center))


def read_expected_error(data: str) -> str:
    """The message fragment on the first line of an invalid input file, written as '# error: <fragment>'"""
    first_line = data.splitlines()[0]
    assert first_line.startswith("# error: "), first_line
    return first_line.removeprefix("# error: ")
