from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.spatial import cKDTree

from calyx_assess.arrays import BoolArray, FloatArray, IntArray, as_points, frozen
from calyx_assess.constants import EPSILON_ORIGIN_MM, EPSILON_SURFACE_MM, PROBE_DIRECTION, UNIT_NORM_TOLERANCE
from calyx_assess.exceptions import MeshFormatError, WatertightnessRequired
from calyx_assess.geometry.bvh import Bvh, build_bvh, traverse
from calyx_assess.geometry.intersect import RayShear, closest_points_on_triangles, intersect_pairs

logger = logging.getLogger(__name__)

# Upper bound on (ray, face) pairs evaluated at once by the brute-force paths
_NAIVE_PAIR_CHUNK = 2_000_000
# Hits closer than this along one ray are the same crossing (shared edges and vertices)
_DUPLICATE_HIT_TOLERANCE = 1e-9


@dataclass(frozen=True, slots=True)
class RayHit:
    face_index: int
    t: float


class _DistanceIndex:
    """KD-tree over face centroids plus the largest centroid-to-vertex radius"""

    __slots__ = ("max_radius", "tree")

    def __init__(self, centroids: FloatArray, max_radius: float) -> None:
        self.tree = cKDTree(centroids)
        self.max_radius = max_radius


@dataclass(frozen=True, kw_only=True, slots=True, eq=False)
class TriMesh:
    """An immutable triangle mesh in millimeters.

    Construction validates indices, rejects zero-area faces, determines watertightness (every edge shared by
    exactly two faces) and builds the BVH used by all ray queries.
    """

    vertices: FloatArray
    faces: IntArray
    is_watertight: bool = field(init=False)
    bvh: Bvh = field(init=False, repr=False)
    _v0: FloatArray = field(init=False, repr=False)
    _v1: FloatArray = field(init=False, repr=False)
    _v2: FloatArray = field(init=False, repr=False)
    _distance_index: _DistanceIndex | None = field(init=False, repr=False, default=None)

    def __post_init__(self) -> None:
        vertices = np.array(self.vertices, dtype=np.float64)
        if vertices.size == 0:
            vertices = vertices.reshape(0, 3)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshFormatError(f"vertices: Must be an (N, 3) array, but got shape {vertices.shape}")
        if not np.all(np.isfinite(vertices)):
            raise MeshFormatError("vertices: Must be finite")
        faces_in = np.asarray(self.faces)
        if faces_in.size and not np.issubdtype(faces_in.dtype, np.integer):
            raise MeshFormatError(f"faces: Must contain integer indices, but got dtype {faces_in.dtype}")
        faces = faces_in.astype(np.int64).reshape(-1, 3) if faces_in.size else np.empty((0, 3), dtype=np.int64)
        if len(faces) and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise MeshFormatError(f"faces: Vertex index out of range [0, {len(vertices)})")

        v0, v1, v2 = vertices[faces[:, 0]], vertices[faces[:, 1]], vertices[faces[:, 2]]
        doubled_area = np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)
        degenerate = np.flatnonzero(doubled_area <= 1e-14)
        if len(degenerate):
            raise MeshFormatError(
                f"faces: {len(degenerate)} degenerate (zero-area) triangle(s), first at index {int(degenerate[0])}"
            )

        object.__setattr__(self, "vertices", frozen(vertices))
        object.__setattr__(self, "faces", frozen(faces))
        object.__setattr__(self, "_v0", frozen(v0))
        object.__setattr__(self, "_v1", frozen(v1))
        object.__setattr__(self, "_v2", frozen(v2))
        object.__setattr__(self, "is_watertight", _edges_shared_twice(faces))
        object.__setattr__(self, "bvh", build_bvh(v0, v1, v2))
        if len(faces) and not self.is_watertight:
            logger.debug("Mesh is not watertight; inside/outside queries will be refused")

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def ray_cast(self, origin: Any, direction: Any) -> RayHit | None:
        """Return the nearest face hit by the ray, or None

        :param origin: Ray origin
        :param direction: Unit ray direction
        """
        faces, t = self.ray_cast_many(np.reshape(origin, (1, 3)), np.reshape(direction, (1, 3)))
        if faces[0] < 0:
            return None
        return RayHit(face_index=int(faces[0]), t=float(t[0]))

    def ray_cast_many(self, origins: Any, directions: Any) -> tuple[IntArray, FloatArray]:
        """Nearest hit for a batch of rays using the BVH

        Hits closer than EPSILON_ORIGIN_MM are ignored. Ties on distance resolve to the lowest face index.

        :returns: (face index or -1, distance or inf) per ray
        """
        o, d = _validate_rays(origins, directions)
        result = traverse(
            self.bvh, self._v0, self._v1, self._v2, o, d,
            t_min=EPSILON_ORIGIN_MM, t_max=np.full(len(o), np.inf), mode="nearest",
        )  # fmt: skip
        assert result.face is not None and result.t is not None
        return result.face, result.t

    def ray_cast_naive(self, origin: Any, direction: Any) -> RayHit | None:
        """Brute-force counterpart of ray_cast, testing every face"""
        faces, t = self.ray_cast_many_naive(np.reshape(origin, (1, 3)), np.reshape(direction, (1, 3)))
        if faces[0] < 0:
            return None
        return RayHit(face_index=int(faces[0]), t=float(t[0]))

    def ray_cast_many_naive(self, origins: Any, directions: Any) -> tuple[IntArray, FloatArray]:
        """Brute-force counterpart of ray_cast_many"""
        o, d = _validate_rays(origins, directions)
        n_rays, n_faces = len(o), self.face_count
        best_face = np.full(n_rays, -1, dtype=np.int64)
        best_t = np.full(n_rays, np.inf)
        if not n_faces or not n_rays:
            return best_face, best_t
        shear = RayShear(o, d)
        rays_per_chunk = max(1, _NAIVE_PAIR_CHUNK // n_faces)
        all_faces = np.arange(n_faces, dtype=np.int64)
        for s in range(0, n_rays, rays_per_chunk):
            chunk = np.arange(s, min(s + rays_per_chunk, n_rays), dtype=np.int64)
            pair_rays = np.repeat(chunk, n_faces)
            pair_faces = np.tile(all_faces, len(chunk))
            t = intersect_pairs(shear, pair_rays, self._v0, self._v1, self._v2, pair_faces)
            with np.errstate(invalid="ignore"):
                t = np.where(t > EPSILON_ORIGIN_MM, t, np.inf).reshape(len(chunk), n_faces)
            # argmin returns the first (lowest face index) minimum
            idx = np.argmin(t, axis=1)
            t_min = t[np.arange(len(chunk)), idx]
            hit = np.isfinite(t_min)
            best_face[chunk[hit]] = idx[hit]
            best_t[chunk[hit]] = t_min[hit]
        return best_face, best_t

    def occluded(self, origins: Any, directions: Any, t_max: Any) -> BoolArray:
        """Return whether each ray hits any face strictly between EPSILON_ORIGIN_MM and its t_max

        :param origins: (R, 3) ray origins
        :param directions: (R, 3) unit ray directions
        :param t_max: (R,) or scalar exclusive upper bound on hit distance
        """
        o, d = _validate_rays(origins, directions)
        limits = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (len(o),))
        result = traverse(
            self.bvh, self._v0, self._v1, self._v2, o, d,
            t_min=EPSILON_ORIGIN_MM, t_max=np.array(limits), mode="any",
        )  # fmt: skip
        assert result.occluded is not None
        return result.occluded

    def crossing_counts(self, origins: Any, directions: Any) -> IntArray:
        """Count surface crossings along each ray, merging coincident hits on shared edges"""
        o, d = _validate_rays(origins, directions)
        result = traverse(
            self.bvh, self._v0, self._v1, self._v2, o, d,
            t_min=EPSILON_ORIGIN_MM, t_max=np.full(len(o), np.inf), mode="all",
        )  # fmt: skip
        assert result.hit_rays is not None and result.hit_t is not None
        rays, t = result.hit_rays, result.hit_t
        counts = np.zeros(len(o), dtype=np.int64)
        if not len(rays):
            return counts
        order = np.lexsort((t, rays))
        rays, t = rays[order], t[order]
        distinct = np.ones(len(rays), dtype=bool)
        distinct[1:] = (rays[1:] != rays[:-1]) | (np.diff(t) > _DUPLICATE_HIT_TOLERANCE)
        np.add.at(counts, rays[distinct], 1)
        return counts

    def contains(self, points: Any) -> BoolArray:
        """Return whether each point lies inside the closed surface.

        Uses crossing parity along a fixed probe direction. Points within EPSILON_SURFACE_MM of the surface count
        as inside.

        :raises WatertightnessRequired: The mesh is not watertight
        """
        p = as_points(points)
        if not self.is_watertight:
            raise WatertightnessRequired("Inside/outside queries require a watertight mesh")
        if not self.face_count or not len(p):
            return np.zeros(len(p), dtype=bool)
        probe = np.broadcast_to(np.asarray(PROBE_DIRECTION), p.shape)
        inside = (self.crossing_counts(p, probe) % 2) == 1
        outside = np.flatnonzero(~inside)
        if len(outside):
            inside[outside] = self.distance(p[outside]) <= EPSILON_SURFACE_MM
        return inside

    def point_inside(self, point: Any) -> bool:
        return bool(self.contains(np.reshape(point, (1, 3)))[0])

    def distance(self, points: Any) -> FloatArray:
        """Exact unsigned distance from each point to the nearest surface point"""
        p = as_points(points)
        if not self.face_count:
            return np.full(len(p), np.inf)
        if not len(p):
            return np.empty(0)
        index = self._get_distance_index()
        _, nearest_face = index.tree.query(p)
        nearest_face = np.asarray(nearest_face, dtype=np.int64)
        upper = self._face_distances(p, nearest_face)
        candidates = index.tree.query_ball_point(p, upper + index.max_radius)
        lengths = np.fromiter((len(c) for c in candidates), dtype=np.int64, count=len(p))
        point_idx = np.repeat(np.arange(len(p)), lengths)
        face_idx = np.fromiter((f for c in candidates for f in c), dtype=np.int64, count=int(lengths.sum()))
        dist = upper.copy()
        if len(face_idx):
            np.minimum.at(dist, point_idx, self._face_distances(p[point_idx], face_idx))
        return dist

    def _face_distances(self, p: FloatArray, face_idx: IntArray) -> FloatArray:
        cp = closest_points_on_triangles(p, self._v0[face_idx], self._v1[face_idx], self._v2[face_idx])
        return np.linalg.norm(p - cp, axis=1)

    def _get_distance_index(self) -> _DistanceIndex:
        if self._distance_index is None:
            centroids = (self._v0 + self._v1 + self._v2) / 3.0
            radius = max(
                float(np.linalg.norm(v - centroids, axis=1).max()) for v in (self._v0, self._v1, self._v2)
            )
            object.__setattr__(self, "_distance_index", _DistanceIndex(centroids, radius))
        assert self._distance_index is not None
        return self._distance_index


def _edges_shared_twice(faces: IntArray) -> bool:
    if not len(faces):
        return True
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges.sort(axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def _validate_rays(origins: Any, directions: Any) -> tuple[FloatArray, FloatArray]:
    o = as_points(origins, name="origins")
    d = as_points(directions, name="directions")
    if o.shape != d.shape:
        raise ValueError(f"origins/directions: Shapes differ ({o.shape} vs {d.shape})")
    if len(d) and np.max(np.abs(np.linalg.norm(d, axis=1) - 1.0)) > UNIT_NORM_TOLERANCE:
        raise ValueError("directions: Must be unit length")
    return o, d
