"""Object model loading (PLY subset) and derived geometry.

Supports PLY 1.0 in ascii and binary_little_endian encodings. Vertex
x/y/z properties are required; faces are optional and polygons with more
than three vertices are fan-triangulated. Unknown elements and
properties are parsed and skipped. Model units are millimeters
throughout (no unit autodetection): the pose-correctness threshold is a
fraction of the object diameter, so units must stay consistent.

The writer emits ascii only, with full-precision (round-trip exact)
coordinates.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInput, ParseError

# above this size the O(n^2) diameter switches to a convex-hull reduction
_DIAMETER_BRUTE_MAX = 20_000


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Non-empty set of finite 3D points (millimeters, model frame)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise ValueError(f"expected non-empty (N, 3) points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Vertex cloud plus (possibly empty) triangle index list."""

    vertices: PointCloud
    faces: np.ndarray

    def __post_init__(self):
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(faces) and (faces.min() < 0 or faces.max() >= len(self.vertices)):
            raise ValueError("face index out of range")
        faces = faces.copy()
        faces.setflags(write=False)
        object.__setattr__(self, "faces", faces)


# --- PLY parsing -----------------------------------------------------------

_SCALAR_FMT = {
    "char": "b", "int8": "b",
    "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h",
    "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i",
    "uint": "I", "uint32": "I",
    "float": "f", "float32": "f",
    "double": "d", "float64": "d",
}

_INT_TYPES = {"char", "int8", "uchar", "uint8", "short", "int16",
              "ushort", "uint16", "int", "int32", "uint", "uint32"}


@dataclass
class _Property:
    name: str
    dtype: str
    count_dtype: str | None = None  # set for list properties

    @property
    def is_list(self):
        return self.count_dtype is not None


@dataclass
class _Element:
    name: str
    count: int
    properties: list


def _parse_header(data: bytes):
    """Returns (format, elements, body_offset). Raises ParseError."""
    offset = 0
    lines = []
    while True:
        nl = data.find(b"\n", offset)
        if nl < 0:
            raise ParseError("header has no end_header line", len(data))
        line = data[offset:nl].strip().decode("ascii", errors="replace")
        lines.append((line, offset))
        offset = nl + 1
        if line == "end_header":
            break

    if not lines or lines[0][0] != "ply":
        raise ParseError("missing ply magic line", 0)

    fmt = None
    elements: list[_Element] = []
    for line, line_off in lines[1:-1]:
        tokens = line.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if len(tokens) != 3 or tokens[2] != "1.0":
                raise ParseError(f"unsupported format line: {line!r}", line_off)
            if tokens[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(f"unsupported encoding {tokens[1]!r}", line_off)
            fmt = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3 or not tokens[2].isdigit():
                raise ParseError(f"malformed element line: {line!r}", line_off)
            elements.append(_Element(tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise ParseError("property before any element", line_off)
            if tokens[1] == "list":
                if len(tokens) != 5 or tokens[2] not in _INT_TYPES or tokens[3] not in _SCALAR_FMT:
                    raise ParseError(f"malformed list property: {line!r}", line_off)
                elements[-1].properties.append(_Property(tokens[4], tokens[3], tokens[2]))
            else:
                if len(tokens) != 3 or tokens[1] not in _SCALAR_FMT:
                    raise ParseError(f"malformed property: {line!r}", line_off)
                elements[-1].properties.append(_Property(tokens[2], tokens[1]))
        else:
            raise ParseError(f"unknown header keyword {tokens[0]!r}", line_off)

    if fmt is None:
        raise ParseError("header has no format line", 0)
    return fmt, elements, offset


def _ascii_lines(data: bytes, start: int):
    """Yields (tokens, byte_offset) for each non-empty line of the body."""
    offset = start
    n = len(data)
    while offset < n:
        nl = data.find(b"\n", offset)
        if nl < 0:
            nl = n
        line = data[offset:nl]
        tokens = line.split()
        if tokens:
            yield tokens, offset
        offset = nl + 1


def _read_ascii(data: bytes, start: int, elements):
    out = {}
    lines = _ascii_lines(data, start)
    for elem in elements:
        rows = []
        for _ in range(elem.count):
            try:
                tokens, line_off = next(lines)
            except StopIteration:
                raise ParseError(
                    f"body truncated inside element {elem.name!r}", len(data)
                ) from None
            row = {}
            pos = 0
            for prop in elem.properties:
                try:
                    if prop.is_list:
                        count = int(tokens[pos])
                        values = [float(t) for t in tokens[pos + 1: pos + 1 + count]]
                        if len(values) != count:
                            raise IndexError
                        pos += 1 + count
                        row[prop.name] = values
                    else:
                        row[prop.name] = float(tokens[pos])
                        pos += 1
                except (ValueError, IndexError):
                    raise ParseError(
                        f"malformed {elem.name!r} row for property {prop.name!r}", line_off
                    ) from None
            rows.append(row)
        out[elem.name] = rows
    return out


def _read_binary(data: bytes, start: int, elements):
    out = {}
    offset = start
    for elem in elements:
        rows = []
        scalar_only = all(not p.is_list for p in elem.properties)
        if scalar_only and elem.properties:
            fmt = "<" + "".join(_SCALAR_FMT[p.dtype] for p in elem.properties)
            size = struct.calcsize(fmt)
            need = size * elem.count
            if offset + need > len(data):
                raise ParseError(f"body truncated inside element {elem.name!r}", len(data))
            for i in range(elem.count):
                values = struct.unpack_from(fmt, data, offset + i * size)
                rows.append({p.name: float(v) for p, v in zip(elem.properties, values)})
            offset += need
        else:
            for _ in range(elem.count):
                row = {}
                for prop in elem.properties:
                    if prop.is_list:
                        cfmt = "<" + _SCALAR_FMT[prop.count_dtype]
                        csize = struct.calcsize(cfmt)
                        if offset + csize > len(data):
                            raise ParseError(
                                f"body truncated inside element {elem.name!r}", len(data))
                        (count,) = struct.unpack_from(cfmt, data, offset)
                        offset += csize
                        vfmt = "<" + _SCALAR_FMT[prop.dtype] * count
                        vsize = struct.calcsize(vfmt)
                        if offset + vsize > len(data):
                            raise ParseError(
                                f"body truncated inside element {elem.name!r}", len(data))
                        row[prop.name] = [float(v) for v in struct.unpack_from(vfmt, data, offset)]
                        offset += vsize
                    else:
                        vfmt = "<" + _SCALAR_FMT[prop.dtype]
                        vsize = struct.calcsize(vfmt)
                        if offset + vsize > len(data):
                            raise ParseError(
                                f"body truncated inside element {elem.name!r}", len(data))
                        (value,) = struct.unpack_from(vfmt, data, offset)
                        row[prop.name] = float(value)
                        offset += vsize
                rows.append(row)
        out[elem.name] = rows
    return out


def load_ply(path) -> TriangleMesh:
    """Load a PLY 1.0 model (ascii or binary_little_endian).

    Vertex x/y/z are required; faces are optional (a face-less file
    yields a mesh with an empty face list, i.e. a pure point cloud).
    Unknown properties are skipped. Raises ParseError with the byte
    offset on malformed headers, truncated payloads, or unsupported
    format keywords.
    """
    data = Path(path).read_bytes()
    fmt, elements, body_offset = _parse_header(data)

    vertex_elem = next((e for e in elements if e.name == "vertex"), None)
    if vertex_elem is None:
        raise ParseError("no vertex element declared", 0)
    prop_names = {p.name for p in vertex_elem.properties}
    if not {"x", "y", "z"} <= prop_names:
        raise ParseError("vertex element lacks x/y/z properties", 0)

    reader = _read_ascii if fmt == "ascii" else _read_binary
    parsed = reader(data, body_offset, elements)

    vrows = parsed["vertex"]
    pts = np.array([[r["x"], r["y"], r["z"]] for r in vrows], dtype=np.float64)
    if len(pts) == 0:
        raise ParseError("vertex element is empty", body_offset)
    cloud = PointCloud(pts)

    faces = []
    face_elem = next((e for e in elements if e.name == "face"), None)
    if face_elem is not None:
        list_prop = next(
            (p for p in face_elem.properties
             if p.is_list and p.name in ("vertex_indices", "vertex_index")),
            None,
        )
        if list_prop is None and face_elem.count > 0:
            raise ParseError("face element lacks a vertex_indices list", 0)
        for row in parsed.get("face", []):
            idx = [int(v) for v in row[list_prop.name]]
            if len(idx) < 3 or min(idx) < 0 or max(idx) >= len(cloud):
                raise ParseError("face with invalid vertex indices", body_offset)
            for j in range(1, len(idx) - 1):  # fan-triangulate polygons
                faces.append((idx[0], idx[j], idx[j + 1]))

    return TriangleMesh(cloud, np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_ply(mesh: TriangleMesh | PointCloud, path) -> None:
    """Write an ascii PLY with round-trip exact (repr) coordinates."""
    if isinstance(mesh, PointCloud):
        mesh = TriangleMesh(mesh, np.zeros((0, 3), dtype=np.int64))
    pts = mesh.vertices.points
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(pts)}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {len(mesh.faces)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for p in pts:
        lines.append(f"{p[0]!r} {p[1]!r} {p[2]!r}")
    for f in mesh.faces:
        lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("ascii"))


# --- derived geometry ------------------------------------------------------

def centroid(pc: PointCloud) -> np.ndarray:
    """Arithmetic mean of the points."""
    return pc.points.mean(axis=0)


def _max_pairwise_distance(pts: np.ndarray) -> float:
    best = 0.0
    chunk = 2048
    for i in range(0, len(pts), chunk):
        block = pts[i:i + chunk]
        d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(d2.max()))
    return float(np.sqrt(best))


def diameter(pc: PointCloud) -> float:
    """Maximum pairwise distance between model points.

    Exact O(n^2) up to 20k points; larger clouds are reduced to their
    convex hull first (the extreme pair is always on the hull), falling
    back to brute force when the hull is degenerate.
    """
    pts = pc.points
    if len(pts) < 2:
        raise DegenerateInput("diameter needs at least 2 points")
    if len(pts) <= _DIAMETER_BRUTE_MAX:
        return _max_pairwise_distance(pts)
    try:
        from scipy.spatial import ConvexHull, QhullError
        hull = ConvexHull(pts)
        return _max_pairwise_distance(pts[hull.vertices])
    except QhullError:
        return _max_pairwise_distance(pts)
