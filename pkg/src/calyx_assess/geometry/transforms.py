from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.spatial.transform import Rotation

from calyx_assess.arrays import FloatArray, as_points, as_vector3, frozen

__all__ = ["RigidTransform", "SimilarityTransform", "compose", "rotation_angle_deg"]

Quaternion = tuple[float, float, float, float]
Vector3 = tuple[float, float, float]


def _canonical_quaternion(wxyz: Any) -> Quaternion:
    q = np.asarray(wxyz, dtype=np.float64).reshape(-1)
    if q.shape != (4,) or not np.all(np.isfinite(q)):
        raise ValueError(f"rotation: Must be a finite (w, x, y, z) quaternion, but got {wxyz!r}")
    norm = float(np.linalg.norm(q))
    if norm == 0:
        raise ValueError("rotation: Quaternion must be non-zero")
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"rotation: Quaternion must be unit length, but got norm {norm!r}")
    q = q / norm
    if q[0] < 0:
        q = -q
    return (float(q[0]), float(q[1]), float(q[2]), float(q[3]))


def _matrix_to_quaternion(matrix: Any) -> Quaternion:
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"rotation: Must be a 3x3 matrix, but got shape {m.shape}")
    if not np.allclose(m @ m.T, np.eye(3), atol=1e-6) or np.linalg.det(m) < 0:
        raise ValueError("rotation: Matrix must be orthonormal with determinant +1")
    x, y, z, w = Rotation.from_matrix(m).as_quat()
    return _canonical_quaternion((w, x, y, z))


def _quaternion_to_matrix(q: Quaternion) -> FloatArray:
    w, x, y, z = q
    return np.asarray(Rotation.from_quat([x, y, z, w]).as_matrix(), dtype=np.float64)


@dataclass(frozen=True, kw_only=True, slots=True)
class RigidTransform:
    """A proper rigid motion p -> R p + t.

    The rotation is stored as a unit quaternion (w, x, y, z) with w >= 0. When used as a camera pose it maps world
    coordinates into camera coordinates.
    """

    rotation: Quaternion = (1.0, 0.0, 0.0, 0.0)
    translation: Vector3 = (0.0, 0.0, 0.0)
    matrix: FloatArray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        t = as_vector3(self.translation, name="translation")
        if not np.all(np.isfinite(t)):
            raise ValueError(f"translation: Must be finite, but got {self.translation!r}")
        object.__setattr__(self, "rotation", _canonical_quaternion(self.rotation))
        object.__setattr__(self, "translation", (float(t[0]), float(t[1]), float(t[2])))
        object.__setattr__(self, "matrix", frozen(_quaternion_to_matrix(self.rotation)))

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_matrix(cls, rotation: Any, translation: Any = (0.0, 0.0, 0.0)) -> RigidTransform:
        """Build a transform from a 3x3 rotation matrix and a translation

        :param rotation: Orthonormal 3x3 matrix with determinant +1
        :param translation: Translation 3-vector
        """
        quaternion = _matrix_to_quaternion(rotation)
        return cls(rotation=quaternion, translation=tuple(as_vector3(translation)))  # type: ignore[arg-type]

    @classmethod
    def from_rotvec(cls, rotvec: Any, translation: Any = (0.0, 0.0, 0.0)) -> RigidTransform:
        """Build a transform from an axis-angle vector (radians) and a translation"""
        x, y, z, w = Rotation.from_rotvec(as_vector3(rotvec, name="rotvec")).as_quat()
        return cls(rotation=(w, x, y, z), translation=tuple(as_vector3(translation)))  # type: ignore[arg-type]

    @classmethod
    def from_homogeneous(cls, matrix: Any) -> RigidTransform:
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"matrix: Must be a 4x4 homogeneous matrix, but got shape {m.shape}")
        return cls.from_matrix(m[:3, :3], m[:3, 3])

    @property
    def translation_vector(self) -> FloatArray:
        return np.asarray(self.translation, dtype=np.float64)

    def rotvec(self) -> FloatArray:
        w, x, y, z = self.rotation
        return np.asarray(Rotation.from_quat([x, y, z, w]).as_rotvec(), dtype=np.float64)

    def homogeneous(self) -> FloatArray:
        m = np.eye(4)
        m[:3, :3] = self.matrix
        m[:3, 3] = self.translation
        return m

    def apply(self, points: Any) -> FloatArray:
        """Apply the transform to one 3-vector or an (N, 3) array of points"""
        arr = np.asarray(points, dtype=np.float64)
        if arr.shape == (3,):
            return self.matrix @ arr + self.translation_vector
        return as_points(arr) @ self.matrix.T + self.translation_vector

    def inverse(self) -> RigidTransform:
        rt = self.matrix.T
        return RigidTransform.from_matrix(rt, -rt @ self.translation_vector)

    def center(self) -> FloatArray:
        """Return -R^T t, the position of the origin of the transformed frame.

        For a camera-from-world pose this is the camera center in world coordinates.
        """
        return -self.matrix.T @ self.translation_vector


@dataclass(frozen=True, kw_only=True, slots=True)
class SimilarityTransform:
    """A similarity p -> s R p + t with s > 0"""

    rotation: Quaternion = (1.0, 0.0, 0.0, 0.0)
    translation: Vector3 = (0.0, 0.0, 0.0)
    scale: float = 1.0
    matrix: FloatArray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale: Must be a finite positive number, but got {self.scale!r}")
        t = as_vector3(self.translation, name="translation")
        object.__setattr__(self, "rotation", _canonical_quaternion(self.rotation))
        object.__setattr__(self, "translation", (float(t[0]), float(t[1]), float(t[2])))
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "matrix", frozen(_quaternion_to_matrix(self.rotation)))

    @classmethod
    def identity(cls) -> SimilarityTransform:
        return cls()

    @classmethod
    def from_matrix(cls, rotation: Any, translation: Any = (0.0, 0.0, 0.0), scale: float = 1.0) -> SimilarityTransform:
        return cls(
            rotation=_matrix_to_quaternion(rotation),
            translation=tuple(as_vector3(translation)),  # type: ignore[arg-type]
            scale=float(scale),
        )

    @property
    def translation_vector(self) -> FloatArray:
        return np.asarray(self.translation, dtype=np.float64)

    def apply(self, points: Any) -> FloatArray:
        arr = np.asarray(points, dtype=np.float64)
        if arr.shape == (3,):
            return self.scale * (self.matrix @ arr) + self.translation_vector
        return self.scale * (as_points(arr) @ self.matrix.T) + self.translation_vector

    def inverse(self) -> SimilarityTransform:
        rt = self.matrix.T
        inv_scale = 1.0 / self.scale
        return SimilarityTransform.from_matrix(rt, -inv_scale * (rt @ self.translation_vector), inv_scale)

    def rigid_part(self) -> RigidTransform:
        return RigidTransform(rotation=self.rotation, translation=self.translation)


def compose(outer: Any, inner: Any) -> Any:
    """Return the transform that applies `inner` first, then `outer`.

    Composition of two RigidTransforms is rigid; if either operand is a SimilarityTransform the result is a
    SimilarityTransform.

    :param outer: Transform applied second
    :param inner: Transform applied first
    """
    r = outer.matrix @ inner.matrix
    s_outer = getattr(outer, "scale", 1.0)
    s_inner = getattr(inner, "scale", 1.0)
    t = s_outer * (outer.matrix @ inner.translation_vector) + outer.translation_vector
    if isinstance(outer, SimilarityTransform) or isinstance(inner, SimilarityTransform):
        return SimilarityTransform.from_matrix(r, t, s_outer * s_inner)
    return RigidTransform.from_matrix(r, t)


def rotation_angle_deg(a: RigidTransform | SimilarityTransform, b: RigidTransform | SimilarityTransform) -> float:
    """Return the angle (degrees) of the relative rotation between a and b"""
    rel = a.matrix.T @ b.matrix
    return math.degrees(float(Rotation.from_matrix(rel).magnitude()))
