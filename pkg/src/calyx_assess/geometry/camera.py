from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from calyx_assess.arrays import BoolArray, FloatArray, as_points, as_vector3, frozen
from calyx_assess.geometry.transforms import RigidTransform
from calyx_assess.validators import validate_positive, validate_positive_int


@dataclass(frozen=True, kw_only=True, slots=True)
class PinholeCamera:
    """Pinhole intrinsics of an undistorted camera (pixels)"""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    K: FloatArray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        validate_positive_int("camera.width", self.width)
        validate_positive_int("camera.height", self.height)
        object.__setattr__(self, "fx", validate_positive("camera.fx", self.fx))
        object.__setattr__(self, "fy", validate_positive("camera.fy", self.fy))
        for name, value, limit in (("cx", self.cx, self.width), ("cy", self.cy, self.height)):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not (0 <= value < limit):
                raise ValueError(f"camera.{name}: Must be in [0, {limit}), but got {value!r}")
            object.__setattr__(self, name, float(value))
        k = np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])
        object.__setattr__(self, "K", frozen(k))

    @property
    def mean_focal(self) -> float:
        return 0.5 * (self.fx + self.fy)

    def project_point(self, p_cam: Any) -> tuple[float, float] | None:
        """Project one camera-frame point, or return None when it is not in front of the camera"""
        x, y, z = as_vector3(p_cam, name="p_cam")
        if z <= 0:
            return None
        return (self.fx * x / z + self.cx, self.fy * y / z + self.cy)

    def unproject(self, pixel: Any, depth: float) -> FloatArray:
        """Return the camera-frame point at the given depth that projects to pixel"""
        u, v = np.asarray(pixel, dtype=np.float64).reshape(2)
        return depth * np.array([(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0])

    def project(self, points_cam: Any) -> FloatArray:
        """Project camera-frame points to pixels. Points with z <= 0 project to NaN"""
        p = as_points(points_cam)
        z = p[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * p[:, 0] / z + self.cx
            v = self.fy * p[:, 1] / z + self.cy
        out = np.stack([u, v], axis=1)
        out[z <= 0] = np.nan
        return out

    def in_bounds(self, pixels: FloatArray) -> BoolArray:
        """Return whether each pixel lies in [0, width) x [0, height)"""
        u = pixels[:, 0]
        v = pixels[:, 1]
        with np.errstate(invalid="ignore"):
            return (u >= 0) & (u < self.width) & (v >= 0) & (v < self.height)

    def normalize(self, pixels: Any) -> FloatArray:
        """Map pixels to normalized image coordinates (K^-1 applied, z = 1 dropped)"""
        px = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
        return np.stack([(px[:, 0] - self.cx) / self.fx, (px[:, 1] - self.cy) / self.fy], axis=1)


def project_world(camera: PinholeCamera, pose: RigidTransform, points: Any) -> tuple[FloatArray, FloatArray]:
    """Project world points through a camera-from-world pose

    :param camera: Camera intrinsics
    :param pose: Camera-from-world pose
    :param points: (N, 3) world points
    :returns: (pixels (N, 2), depth (N,)). Pixels are NaN for points behind the camera
    """
    p_cam = pose.apply(as_points(points))
    return camera.project(p_cam), p_cam[:, 2]


def look_at_pose(center: Any, direction: Any, up: Any = (0.0, 0.0, 1.0)) -> RigidTransform:
    """Build a camera-from-world pose for a camera at center looking along direction

    The camera +z axis is the viewing direction and +y points roughly opposite to up (image rows grow downwards).

    :param center: Camera center in world coordinates
    :param direction: Viewing direction (need not be unit length)
    :param up: World up hint; replaced by another axis when nearly parallel to direction
    """
    c = as_vector3(center, name="center")
    z = as_vector3(direction, name="direction")
    norm = np.linalg.norm(z)
    if norm == 0:
        raise ValueError("direction: Must be non-zero")
    z = z / norm
    up_v = as_vector3(up, name="up")
    if abs(float(np.dot(up_v, z))) > 0.99 * np.linalg.norm(up_v):
        up_v = np.array([0.0, 1.0, 0.0]) if abs(z[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(z, up_v)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    r_world_from_cam = np.stack([x, y, z], axis=1)
    r_cam_from_world = r_world_from_cam.T
    return RigidTransform.from_matrix(r_cam_from_world, -r_cam_from_world @ c)
