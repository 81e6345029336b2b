"""Procedural kidney-like phantoms.

The cavity is the union of a pelvis ellipsoid centred at the origin and one capsule per calyx, each capsule
running from the origin along its calyx axis. Every piece contains the origin, so the union is star-shaped about it
and is described by its radial function. Vertices are placed on the surface along a set of unit directions and
faces come from the convex hull of those directions, which yields a closed surface whose triangles all face away
from the origin.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation

from calyx_assess.arrays import FloatArray, IntArray
from calyx_assess.constants import MIN_CALYX_VERTICES
from calyx_assess.exceptions import GenerationFailed, MeshFormatError
from calyx_assess.geometry.mesh import TriMesh
from calyx_assess.phantom import LabeledMesh
from calyx_assess.validators import validate_positive, validate_positive_int

__all__ = ["CalyxAxis", "CenterlineTree", "PhantomSpec", "fibonacci_sphere", "generate_phantom"]

logger = logging.getLogger(__name__)

MIN_RESOLUTION = 6
# Pelvis semi-axes relative to pelvis_radius_mm
_PELVIS_SHAPE = (1.2, 1.0, 0.8)
# Tube rings start at this fraction of the pelvis radius along the axis
_RING_START = 0.6
_DIRECTION_JITTER_RAD = 1e-6


@dataclass(frozen=True, kw_only=True, slots=True)
class PhantomSpec:
    n_calyces: int = 6
    calyx_diameter_mm: float = 10.0
    calyx_depth_mm: float = 25.0
    pelvis_radius_mm: float = 15.0
    mesh_resolution: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        validate_positive_int("n_calyces", self.n_calyces)
        validate_positive_int("mesh_resolution", self.mesh_resolution)
        validate_positive_int("seed", self.seed, allow_zero=True)
        for name in ("calyx_diameter_mm", "calyx_depth_mm", "pelvis_radius_mm"):
            object.__setattr__(self, name, validate_positive(name, getattr(self, name)))


@dataclass(frozen=True, kw_only=True, slots=True)
class CalyxAxis:
    """Centerline of one calyx: the segment from the origin to length_mm along direction"""

    calyx_id: int
    direction: tuple[float, float, float]
    junction_mm: float
    length_mm: float
    radius_mm: float

    def point_at(self, s: float) -> FloatArray:
        return s * np.asarray(self.direction)

    @property
    def tip(self) -> FloatArray:
        return self.point_at(self.length_mm)


@dataclass(frozen=True, kw_only=True, slots=True)
class CenterlineTree:
    """Axes of all calyces, radiating from the pelvis center at the origin"""

    pelvis_semi_axes: tuple[float, float, float]
    calyces: tuple[CalyxAxis, ...] = field(default=())

    def axis(self, calyx_id: int) -> CalyxAxis:
        for c in self.calyces:
            if c.calyx_id == calyx_id:
                return c
        raise KeyError(calyx_id)

    @property
    def calyx_ids(self) -> tuple[int, ...]:
        return tuple(c.calyx_id for c in self.calyces)


def fibonacci_sphere(n: int) -> FloatArray:
    """n roughly evenly spread unit vectors"""
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n
    rho = np.sqrt(1.0 - z * z)
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def _ellipsoid_radius(u: FloatArray, semi_axes: FloatArray) -> FloatArray:
    return 1.0 / np.sqrt(np.sum((u / semi_axes) ** 2, axis=1))


def _capsule_radius(u: FloatArray, axis: FloatArray, length: float, radius: float) -> FloatArray:
    """Distance from the origin to the boundary of the capsule around segment [0, length * axis] along u"""
    cos_t = np.clip(u @ axis, -1.0, 1.0)
    sin_t = np.sqrt(1.0 - cos_t * cos_t)
    out = np.full(len(u), radius)
    forward = cos_t > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        s_wall = np.where(sin_t > 0, radius / sin_t, np.inf)
        s_cap = length * cos_t + np.sqrt(np.maximum(radius**2 - (length * sin_t) ** 2, 0.0))
    through_wall = forward & (s_wall * cos_t <= length)
    out[through_wall] = s_wall[through_wall]
    through_cap = forward & ~through_wall
    out[through_cap] = s_cap[through_cap]
    return out


def _ring_directions(
    axis: FloatArray, length: float, radius: float, ring_start: float, step: float, resolution: int
) -> FloatArray:
    """Unit directions of the tube rings, the cap rings and the tip of one calyx"""
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    phi = 2.0 * math.pi * np.arange(resolution) / resolution
    points = []
    n_tube = max(1, math.ceil((length - ring_start) / step))
    for k, z in enumerate(np.linspace(length, ring_start, n_tube + 1).tolist()):
        offset = math.pi / resolution * (k % 2)
        ring = np.cos(phi + offset)[:, None] * e1 + np.sin(phi + offset)[:, None] * e2
        points.append(z * axis + radius * ring)
    n_cap = max(2, round(0.5 * math.pi * radius / step))
    for j in range(1, n_cap):
        beta = 0.5 * math.pi * j / n_cap
        offset = math.pi / resolution * (j % 2)
        ring = np.cos(phi + offset)[:, None] * e1 + np.sin(phi + offset)[:, None] * e2
        points.append((length + radius * math.cos(beta)) * axis + radius * math.sin(beta) * ring)
    points.append(((length + radius) * axis)[None, :])
    p = np.concatenate(points)
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def _calyx_axes(spec: PhantomSpec, rng: np.random.Generator) -> FloatArray:
    # a normalized Gaussian 4-vector is a uniformly distributed rotation
    q = rng.normal(size=4)
    rotation = Rotation.from_quat(q / np.linalg.norm(q))
    return np.asarray(rotation.apply(fibonacci_sphere(spec.n_calyces)), dtype=np.float64).reshape(-1, 3)


def _check_separation(axes: FloatArray, junctions: FloatArray, radius: float) -> None:
    half_widths = np.arctan(radius / junctions)
    for i in range(len(axes)):
        for j in range(i + 1, len(axes)):
            angle = math.acos(float(np.clip(axes[i] @ axes[j], -1.0, 1.0)))
            if angle <= half_widths[i] + half_widths[j]:
                raise GenerationFailed(
                    f"Calyces {i + 1} and {j + 1} overlap ({math.degrees(angle):.1f} deg apart); "
                    "use fewer or narrower calyces"
                )


def generate_phantom(spec: PhantomSpec) -> tuple[LabeledMesh, CenterlineTree]:
    """Build a labeled phantom mesh and the centerline tree used to plan trajectories

    :param spec: Phantom parameters
    :raises GenerationFailed: The spec cannot produce a valid closed, labeled mesh
    """
    if spec.mesh_resolution < MIN_RESOLUTION:
        raise GenerationFailed(
            f"mesh_resolution: At least {MIN_RESOLUTION} segments per ring are needed to close the mesh, "
            f"but got {spec.mesh_resolution}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed]))
    semi_axes = spec.pelvis_radius_mm * np.asarray(_PELVIS_SHAPE)
    radius = spec.calyx_diameter_mm / 2.0
    step = 2.0 * math.pi * radius / spec.mesh_resolution

    axes = _calyx_axes(spec, rng)
    junctions = _ellipsoid_radius(axes, semi_axes)
    _check_separation(axes, junctions, radius)
    lengths = junctions + spec.calyx_depth_mm - radius
    ring_starts = _RING_START * junctions

    # pelvis directions at roughly the tube vertex spacing, minus the cones covered by the calyx rings
    area = 4.0 * math.pi * float(np.prod(semi_axes)) ** (2.0 / 3.0)
    base = fibonacci_sphere(max(64, math.ceil(area / (0.5 * math.sqrt(3.0) * step * step))))
    cone = np.arctan(radius / ring_starts) + 0.5 * step / ring_starts
    in_cone = np.any(base @ axes.T > np.cos(cone), axis=1)
    base = base[~in_cone]
    base = base + rng.normal(scale=_DIRECTION_JITTER_RAD, size=base.shape)
    base /= np.linalg.norm(base, axis=1, keepdims=True)

    rings = [
        _ring_directions(axes[i], float(lengths[i]), radius, float(ring_starts[i]), step, spec.mesh_resolution)
        for i in range(spec.n_calyces)
    ]
    directions = np.concatenate([base, *rings])

    pelvis_r = _ellipsoid_radius(directions, semi_axes)
    calyx_r = np.stack(
        [_capsule_radius(directions, axes[i], float(lengths[i]), radius) for i in range(spec.n_calyces)], axis=1
    )
    protrudes = calyx_r > pelvis_r[:, None]
    if np.any(protrudes.sum(axis=1) > 1):
        raise GenerationFailed("Calyx tubes intersect outside the pelvis")
    labels = np.where(protrudes.any(axis=1), np.argmax(protrudes, axis=1) + 1, 0).astype(np.int64)
    radii = np.maximum(pelvis_r, calyx_r.max(axis=1))
    vertices = directions * radii[:, None]

    faces = _hull_faces(directions)
    try:
        mesh = TriMesh(vertices=vertices, faces=faces)
        labeled = LabeledMesh(
            mesh=mesh,
            labels=labels,
            calyx_names={i + 1: f"calyx_{i + 1}" for i in range(spec.n_calyces)},
            min_calyx_vertices=MIN_CALYX_VERTICES,
        )
    except MeshFormatError as e:
        raise GenerationFailed(f"Generated mesh is invalid: {e}") from e
    if not mesh.is_watertight:
        raise GenerationFailed("Generated mesh is not watertight")

    tree = CenterlineTree(
        pelvis_semi_axes=(float(semi_axes[0]), float(semi_axes[1]), float(semi_axes[2])),
        calyces=tuple(
            CalyxAxis(
                calyx_id=i + 1,
                direction=(float(axes[i, 0]), float(axes[i, 1]), float(axes[i, 2])),
                junction_mm=float(junctions[i]),
                length_mm=float(lengths[i]),
                radius_mm=radius,
            )
            for i in range(spec.n_calyces)
        ),
    )
    logger.info(
        f"Generated phantom: {mesh.vertex_count} vertices, {mesh.face_count} faces, {spec.n_calyces} calyces"
    )
    return labeled, tree


def _hull_faces(directions: FloatArray) -> IntArray:
    hull = ConvexHull(directions)
    faces = np.asarray(hull.simplices, dtype=np.int64)
    if len(np.unique(faces)) != len(directions):
        raise GenerationFailed("Some surface directions are not hull vertices; increase mesh_resolution")
    a, b, c = directions[faces[:, 0]], directions[faces[:, 1]], directions[faces[:, 2]]
    inward = np.einsum("ij,ij->i", np.cross(b - a, c - a), a) < 0
    faces[inward] = faces[inward][:, [0, 2, 1]]
    return faces
