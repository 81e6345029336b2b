"""PLY reading and writing for meshes and point clouds.

Any ASCII or binary PLY with a ``vertex`` element (x, y, z plus optional scalar properties) and an optional
``face`` element of triangles can be read. Files are always written as ASCII with ``double`` coordinates
serialized by ``repr`` so that a write/read round trip is bit-exact.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any

import numpy as np
import numpy.typing as npt

from calyx_assess.arrays import FloatArray, IntArray
from calyx_assess.constants import DEFAULT_ENCODING
from calyx_assess.exceptions import MeshFormatError
from calyx_assess.paths import compression_aware_open

__all__ = ["PlyData", "read_ply", "write_ply"]

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}  # fmt: skip
_NUMPY_TO_PLY = {"i1": "char", "u1": "uchar", "i2": "short", "u2": "ushort", "i4": "int", "u4": "uint", "f8": "double"}


@dataclass(frozen=True, kw_only=True, slots=True)
class PlyData:
    """Parsed content of a PLY file"""

    vertex: Mapping[str, npt.NDArray[Any]]
    faces: IntArray | None = None
    comments: tuple[str, ...] = ()
    vertex_count: int = field(init=False)

    def __post_init__(self) -> None:
        for axis in "xyz":
            if axis not in self.vertex:
                raise MeshFormatError(f"PLY vertex element has no {axis!r} property")
        object.__setattr__(self, "vertex_count", len(self.vertex["x"]))

    def points(self) -> FloatArray:
        return np.stack([self.vertex[a].astype(np.float64) for a in "xyz"], axis=1).reshape(-1, 3)


@dataclass(slots=True)
class _Element:
    name: str
    count: int
    properties: list[tuple[str, str]] = field(default_factory=list)
    list_types: tuple[str, str] | None = None


def read_ply(f: IO[Any]) -> PlyData:
    """Parse a PLY file opened in binary mode (text mode is accepted for ASCII files)

    :param f: Open file object
    """
    fmt, elements, comments = _read_header(f)
    vertex_el = next((e for e in elements if e.name == "vertex"), None)
    if vertex_el is None:
        raise MeshFormatError("PLY file has no vertex element")
    unknown = [e.name for e in elements if e.name not in ("vertex", "face")]
    if unknown:
        raise MeshFormatError(f"Unsupported PLY element(s): {', '.join(unknown)}")

    if fmt == "ascii":
        body = f.read()
        text = body.decode(DEFAULT_ENCODING) if isinstance(body, bytes) else body
        body_lines = [ln for ln in text.splitlines() if ln.strip()]
        vertex, faces = _parse_ascii_body(body_lines, elements)
    else:
        if not isinstance(f.read(0), bytes):
            raise MeshFormatError("Binary PLY files must be opened in binary mode")
        byte_order = "<" if fmt == "binary_little_endian" else ">"
        vertex, faces = _parse_binary_body(f.read(), elements, byte_order)
    return PlyData(vertex=vertex, faces=faces, comments=tuple(comments))


def write_ply(
    path: Path,
    vertices: FloatArray,
    *,
    faces: IntArray | None = None,
    vertex_properties: Mapping[str, npt.NDArray[Any]] | None = None,
    comments: Iterable[str] = (),
) -> None:
    """Write an ASCII PLY file

    :param path: Output path (a .gz/.bz2/.xz suffix compresses the output)
    :param vertices: (N, 3) coordinates
    :param faces: Optional (F, 3) triangle indices
    :param vertex_properties: Extra integer per-vertex properties, written after x, y, z in the given order
    :param comments: Header comment lines
    """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    props = {k: np.asarray(v) for k, v in (vertex_properties or {}).items()}
    for name, values in props.items():
        if len(values) != len(vertices):
            raise ValueError(f"vertex property {name!r}: Expected {len(vertices)} values, but got {len(values)}")
        if not np.issubdtype(values.dtype, np.integer):
            raise ValueError(f"vertex property {name!r}: Only integer properties are supported")

    lines = ["ply", "format ascii 1.0"]
    lines += [f"comment {c}" for c in comments]
    lines += [f"element vertex {len(vertices)}", "property double x", "property double y", "property double z"]
    for name, values in props.items():
        lines.append(f"property {_NUMPY_TO_PLY.get(values.dtype.str[1:], 'int')} {name}")
    if faces is not None:
        lines += [f"element face {len(faces)}", "property list uchar int vertex_indices"]
    lines.append("end_header")

    columns = [props[name].tolist() for name in props]
    for i, (x, y, z) in enumerate(vertices.tolist()):
        extra = "".join(f" {col[i]}" for col in columns)
        lines.append(f"{x!r} {y!r} {z!r}{extra}")
    if faces is not None:
        lines += [f"3 {a} {b} {c}" for a, b, c in np.asarray(faces, dtype=np.int64).tolist()]

    with compression_aware_open(path, mode="w", encoding=DEFAULT_ENCODING, newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def _read_header(f: IO[Any]) -> tuple[str, list[_Element], list[str]]:
    def next_line() -> str:
        raw = f.readline()
        if not raw:
            raise MeshFormatError("Unexpected end of file in PLY header")
        return (raw.decode("ascii") if isinstance(raw, bytes) else raw).strip()

    if next_line() != "ply":
        raise MeshFormatError("Not a PLY file (missing 'ply' magic)")
    fmt = ""
    elements: list[_Element] = []
    comments: list[str] = []
    line_no = 1
    while True:
        line = next_line()
        line_no += 1
        tokens = line.split()
        if not tokens:
            continue
        keyword = tokens[0]
        if keyword == "end_header":
            break
        if keyword == "format":
            if len(tokens) != 3 or tokens[1] not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise MeshFormatError(f"line {line_no}: Unsupported PLY format {line!r}")
            fmt = tokens[1]
        elif keyword in ("comment", "obj_info"):
            comments.append(line.partition(" ")[2])
        elif keyword == "element":
            if len(tokens) != 3 or not tokens[2].isdigit():
                raise MeshFormatError(f"line {line_no}: Malformed element declaration {line!r}")
            elements.append(_Element(tokens[1], int(tokens[2])))
        elif keyword == "property":
            if not elements:
                raise MeshFormatError(f"line {line_no}: Property declared before any element")
            el = elements[-1]
            if tokens[1:2] == ["list"]:
                if len(tokens) != 5 or tokens[2] not in _PLY_TYPES or tokens[3] not in _PLY_TYPES:
                    raise MeshFormatError(f"line {line_no}: Malformed list property {line!r}")
                if el.name != "face" or el.list_types is not None or el.properties:
                    raise MeshFormatError(f"line {line_no}: Only a single face index list is supported")
                el.list_types = (_PLY_TYPES[tokens[2]], _PLY_TYPES[tokens[3]])
            else:
                if len(tokens) != 3 or tokens[1] not in _PLY_TYPES:
                    raise MeshFormatError(f"line {line_no}: Malformed property {line!r}")
                if el.name == "face":
                    raise MeshFormatError(f"line {line_no}: Scalar face properties are not supported")
                el.properties.append((tokens[2], _PLY_TYPES[tokens[1]]))
        else:
            raise MeshFormatError(f"line {line_no}: Unknown PLY header keyword {keyword!r}")
    if not fmt:
        raise MeshFormatError("PLY header has no format line")
    return fmt, elements, comments


def _parse_ascii_body(
    lines: list[str], elements: list[_Element]
) -> tuple[dict[str, npt.NDArray[Any]], IntArray | None]:
    vertex: dict[str, npt.NDArray[Any]] = {}
    faces: IntArray | None = None
    pos = 0
    for el in elements:
        block = lines[pos : pos + el.count]
        if len(block) < el.count:
            raise MeshFormatError(f"Expected {el.count} {el.name} lines, but the file ends early")
        pos += el.count
        if el.name == "vertex":
            vertex = _parse_ascii_vertices(block, el.properties)
        else:
            try:
                table = np.array([ln.split() for ln in block], dtype=np.int64).reshape(el.count, -1)
            except ValueError:
                raise MeshFormatError("Faces must be triangles written as '3 i j k'") from None
            if el.count and (table.shape[1] != 4 or not np.all(table[:, 0] == 3)):
                raise MeshFormatError("Faces must be triangles written as '3 i j k'")
            faces = table[:, 1:] if el.count else np.empty((0, 3), dtype=np.int64)
    if pos != len(lines):
        raise MeshFormatError(f"Unexpected trailing data after the declared elements ({len(lines) - pos} lines)")
    return vertex, faces


def _parse_ascii_vertices(block: list[str], properties: list[tuple[str, str]]) -> dict[str, npt.NDArray[Any]]:
    """Parse vertex rows. Rows that end early leave their trailing non-coordinate properties as NaN"""
    n_props = len(properties)
    rows = [ln.split() for ln in block]
    table = np.full((len(rows), n_props), np.nan)
    for i, row in enumerate(rows):
        if len(row) > n_props or len(row) < 3:
            raise MeshFormatError(f"Vertex {i} has {len(row)} values, expected {n_props}")
        try:
            table[i, : len(row)] = [float(t) for t in row]
        except ValueError as e:
            raise MeshFormatError(f"Vertex {i}: {e}") from None
    return {name: _cast_column(table[:, col], np_type, name) for col, (name, np_type) in enumerate(properties)}


def _parse_binary_body(
    data: bytes, elements: list[_Element], byte_order: str
) -> tuple[dict[str, npt.NDArray[Any]], IntArray | None]:
    vertex: dict[str, npt.NDArray[Any]] = {}
    faces: IntArray | None = None
    offset = 0
    for el in elements:
        if el.name == "vertex":
            dtype = np.dtype([(name, byte_order + t) for name, t in el.properties])
        else:
            assert el.list_types is not None
            count_t, index_t = el.list_types
            dtype = np.dtype([("n", byte_order + count_t), ("idx", byte_order + index_t, (3,))])
        size = dtype.itemsize * el.count
        if offset + size > len(data):
            raise MeshFormatError(f"Binary PLY ends early in element {el.name!r}")
        records = np.frombuffer(data, dtype=dtype, count=el.count, offset=offset)
        offset += size
        if el.name == "vertex":
            for name, np_type in el.properties:
                native = np.float64 if name in ("x", "y", "z") else np.dtype(np_type)
                vertex[name] = records[name].astype(native)
        else:
            if el.count and not np.all(records["n"] == 3):
                raise MeshFormatError("Binary faces must all be triangles")
            faces = records["idx"].astype(np.int64)
    return vertex, faces


def _cast_column(values: FloatArray, np_type: str, name: str) -> npt.NDArray[Any]:
    if np_type.startswith("f") or np.isnan(values).any():
        return values
    as_int = values.astype(np.int64)
    if not np.array_equal(as_int, values):
        raise MeshFormatError(f"Vertex property {name!r} is declared integer but holds non-integer values")
    return as_int
