from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from calyx_assess.arrays import BoolArray, FloatArray, IntArray, frozen
from calyx_assess.constants import MIN_CALYX_VERTICES, UNANNOTATED_LABEL
from calyx_assess.exceptions import LabelCountMismatch, MeshFormatError, NonContiguousLabels, UndersizedCalyx
from calyx_assess.formats.ply import PlyData, write_ply
from calyx_assess.formats.reader import read_file
from calyx_assess.geometry.mesh import TriMesh
from calyx_assess.utils import add_error_note

__all__ = ["CalyxSummary", "LabeledMesh", "calyx_summaries", "load_labeled_mesh", "load_mesh", "save_labeled_mesh"]

logger = logging.getLogger(__name__)

LABEL_PROPERTY = "calyx_id"
VISITED_PROPERTY = "visited"
_NAME_COMMENT = "calyx_name"


@dataclass(frozen=True, kw_only=True, slots=True, eq=False)
class LabeledMesh:
    """A triangle mesh whose vertices carry calyx ids.

    Label 0 marks unannotated anatomy (pelvis, ureter, entrance). Calyx ids are contiguous from 1 and each calyx
    has at least min_calyx_vertices vertices.
    """

    mesh: TriMesh
    labels: IntArray
    calyx_names: Mapping[int, str] = field(default_factory=dict)
    min_calyx_vertices: int = MIN_CALYX_VERTICES
    calyx_ids: tuple[int, ...] = field(init=False)
    calyx_sizes: Mapping[int, int] = field(init=False)

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            raise MeshFormatError(f"labels: Must be integers, but got dtype {labels.dtype}")
        labels = labels.astype(np.int64).reshape(-1)
        if len(labels) != self.mesh.vertex_count:
            raise LabelCountMismatch(
                f"Got {len(labels)} labels for {self.mesh.vertex_count} vertices; every vertex needs one label"
            )
        if len(labels) and labels.min() < 0:
            raise MeshFormatError("labels: Calyx ids must be non-negative")

        counts = np.bincount(labels) if len(labels) else np.zeros(1, dtype=np.int64)
        present = [int(i) for i in np.flatnonzero(counts) if i != UNANNOTATED_LABEL]
        expected = list(range(1, len(present) + 1))
        if present != expected:
            raise NonContiguousLabels(f"Calyx ids must be contiguous from 1, but got {present}")
        undersized = {i: int(counts[i]) for i in present if counts[i] < self.min_calyx_vertices}
        if undersized:
            raise UndersizedCalyx(
                f"Calyces with fewer than {self.min_calyx_vertices} vertices: "
                + ", ".join(f"{i} ({n})" for i, n in undersized.items())
            )
        unknown = sorted(set(self.calyx_names) - set(present))
        if unknown:
            raise MeshFormatError(f"calyx_names: Names given for unknown calyx ids {unknown}")

        names = {i: self.calyx_names.get(i, f"calyx_{i}") for i in present}
        object.__setattr__(self, "labels", frozen(labels))
        object.__setattr__(self, "calyx_ids", tuple(present))
        object.__setattr__(self, "calyx_sizes", {i: int(counts[i]) for i in present})
        object.__setattr__(self, "calyx_names", names)

    @property
    def vertices(self) -> FloatArray:
        return self.mesh.vertices

    @property
    def calyx_count(self) -> int:
        return len(self.calyx_ids)

    def calyx_mask(self, calyx_id: int) -> BoolArray:
        return self.labels == calyx_id


@dataclass(frozen=True, kw_only=True, slots=True)
class CalyxSummary:
    calyx_id: int
    name: str
    vertex_count: int
    centroid: tuple[float, float, float]


def calyx_summaries(m: LabeledMesh) -> list[CalyxSummary]:
    """Return one summary per calyx, ordered by id"""
    summaries = []
    for calyx_id in m.calyx_ids:
        members = m.vertices[m.labels == calyx_id]
        cx, cy, cz = members.mean(axis=0).tolist()
        summaries.append(
            CalyxSummary(
                calyx_id=calyx_id,
                name=m.calyx_names[calyx_id],
                vertex_count=len(members),
                centroid=(cx, cy, cz),
            )
        )
    return summaries


def load_mesh(path: Path) -> TriMesh:
    """Load an unlabeled triangle mesh"""
    data = _read_ply(path)
    if data.faces is None:
        raise MeshFormatError(f"{path.name}: PLY file has no face element")
    try:
        return TriMesh(vertices=data.points(), faces=data.faces)
    except MeshFormatError as e:
        add_error_note(e, f"While loading mesh {str(path)!r}")
        raise


def load_labeled_mesh(path: Path, *, min_calyx_vertices: int = MIN_CALYX_VERTICES) -> LabeledMesh:
    """Load and validate a labeled mesh

    :param path: PLY file with a per-vertex integer 'calyx_id' property
    :param min_calyx_vertices: Minimum number of vertices per calyx
    """
    data = _read_ply(path)
    if data.faces is None:
        raise MeshFormatError(f"{path.name}: PLY file has no face element")
    if LABEL_PROPERTY not in data.vertex:
        raise LabelCountMismatch(f"{path.name}: Vertices have no {LABEL_PROPERTY!r} property")
    labels = np.asarray(data.vertex[LABEL_PROPERTY])
    if np.issubdtype(labels.dtype, np.floating) and np.isnan(labels).any():
        missing = int(np.isnan(labels).sum())
        raise LabelCountMismatch(
            f"{path.name}: {missing} of {data.vertex_count} vertices have no {LABEL_PROPERTY!r} value; "
            "every vertex needs one label"
        )
    try:
        labeled = LabeledMesh(
            mesh=TriMesh(vertices=data.points(), faces=data.faces),
            labels=labels,
            calyx_names=_parse_calyx_names(data.comments),
            min_calyx_vertices=min_calyx_vertices,
        )
    except MeshFormatError as e:
        add_error_note(e, f"While loading labeled mesh {str(path)!r}")
        raise
    if not labeled.mesh.is_watertight:
        logger.warning(f"{path.name}: Mesh is not watertight; the spatial filter cannot be applied to it")
    logger.info(
        f"Loaded {path.name}: {labeled.mesh.vertex_count} vertices, {labeled.mesh.face_count} faces, "
        f"{labeled.calyx_count} calyces"
    )
    return labeled


def save_labeled_mesh(path: Path, m: LabeledMesh, *, visited: Any = None) -> None:
    """Write a labeled mesh, optionally with a per-vertex 0/1 'visited' property

    :param path: Output path
    :param m: Labeled mesh
    :param visited: Optional collection of visited vertex indices
    """
    props = {LABEL_PROPERTY: m.labels.astype(np.int32)}
    if visited is not None:
        flags = np.zeros(m.mesh.vertex_count, dtype=np.uint8)
        flags[np.asarray(visited, dtype=np.int64)] = 1
        props[VISITED_PROPERTY] = flags
    comments = [f"{_NAME_COMMENT} {i} {m.calyx_names[i]}" for i in m.calyx_ids]
    write_ply(path, m.mesh.vertices, faces=m.mesh.faces, vertex_properties=props, comments=comments)


def _read_ply(path: Path) -> PlyData:
    data = read_file(path)
    if not isinstance(data, PlyData):
        raise MeshFormatError(f"{path.name}: Expected a PLY file")
    return data


def _parse_calyx_names(comments: tuple[str, ...]) -> dict[int, str]:
    names = {}
    for comment in comments:
        parts = comment.split(maxsplit=2)
        if len(parts) == 3 and parts[0] == _NAME_COMMENT:
            try:
                names[int(parts[1])] = parts[2]
            except ValueError:
                raise MeshFormatError(f"Malformed calyx name comment: {comment!r}") from None
    return names
