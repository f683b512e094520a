"""PLY I/O for Gaussian-splat models in the de facto 3DGS layout.

Reads ASCII and binary little-endian PLY files whose ``vertex`` element
carries at least the 59 splat properties; any additional scalar properties
(normals, custom channels) are preserved verbatim in a passthrough
side-table and re-emitted on write. Writing always uses the canonical
property order below, so ``write . read`` is the identity on canonical
files and every read/write/read round-trip is bit-exact on all 59
attributes.

Canonical property order: x y z, f_dc_0..2, f_rest_0..44, opacity,
scale_0..2, rot_0..3 (all float32; binary encoding is little-endian).
"""

from __future__ import annotations

import io
import os

import numpy as np

from .errors import PlyIOError, PlyParseError, PlySchemaError
from .splats import ATTR_COUNT, GaussianCloud

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_TYPE_NAMES = {
    "i1": "char", "u1": "uchar", "i2": "short", "u2": "ushort",
    "i4": "int", "u4": "uint", "f4": "float", "f8": "double",
}

REQUIRED_PROPERTIES: tuple[str, ...] = (
    ("x", "y", "z")
    + tuple(f"f_dc_{i}" for i in range(3))
    + tuple(f"f_rest_{i}" for i in range(45))
    + ("opacity",)
    + tuple(f"scale_{i}" for i in range(3))
    + tuple(f"rot_{i}" for i in range(4))
)

# property name -> column in the (N, 59) attribute matrix
_COLUMN_OF = {"x": 0, "y": 1, "z": 2, "opacity": 3}
_COLUMN_OF.update({f"scale_{i}": 4 + i for i in range(3)})
_COLUMN_OF.update({f"rot_{i}": 7 + i for i in range(4)})
_COLUMN_OF.update({f"f_dc_{i}": 11 + i for i in range(3)})
_COLUMN_OF.update({f"f_rest_{i}": 14 + i for i in range(45)})

assert len(REQUIRED_PROPERTIES) == ATTR_COUNT == len(_COLUMN_OF)


def _parse_header(raw: bytes, path: str):
    """Parse the header; returns (fmt, count, properties, body_offset).

    ``properties`` is a list of (name, numpy little-endian dtype string) in
    file order.
    """
    end_marker = b"end_header\n"
    end = raw.find(end_marker)
    if end < 0:
        raise PlyParseError(f"{path}: no end_header line found")
    body_offset = end + len(end_marker)
    header_text = raw[:end].decode("ascii", errors="replace")
    lines = header_text.split("\n")

    if not lines or lines[0].strip() != "ply":
        got = lines[0].strip() if lines else ""
        raise PlyParseError(f"{path}:1: expected 'ply' magic, got {got!r}")

    fmt = None
    count = None
    in_vertex = False
    properties: list[tuple[str, str]] = []
    seen = set()

    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        tokens = line.split()
        keyword = tokens[0]
        if keyword == "format":
            if len(tokens) != 3:
                raise PlyParseError(f"{path}:{lineno}: malformed format line: {line!r}")
            if tokens[1] == "ascii":
                fmt = "ascii"
            elif tokens[1] == "binary_little_endian":
                fmt = "binary"
            else:
                raise PlyParseError(f"{path}:{lineno}: unsupported format {tokens[1]!r}")
        elif keyword == "element":
            if len(tokens) != 3:
                raise PlyParseError(f"{path}:{lineno}: malformed element line: {line!r}")
            if tokens[1] != "vertex":
                raise PlyParseError(f"{path}:{lineno}: unsupported element {tokens[1]!r} (only 'vertex' is handled)")
            if count is not None:
                raise PlyParseError(f"{path}:{lineno}: duplicate vertex element")
            try:
                count = int(tokens[2])
            except ValueError:
                raise PlyParseError(f"{path}:{lineno}: bad vertex count {tokens[2]!r}") from None
            if count < 0:
                raise PlyParseError(f"{path}:{lineno}: negative vertex count {count}")
            in_vertex = True
        elif keyword == "property":
            if not in_vertex:
                raise PlyParseError(f"{path}:{lineno}: property declared before any element: {line!r}")
            if len(tokens) >= 2 and tokens[1] == "list":
                raise PlyParseError(f"{path}:{lineno}: list properties are not supported: {line!r}")
            if len(tokens) != 3:
                raise PlyParseError(f"{path}:{lineno}: malformed property line: {line!r}")
            type_name, prop_name = tokens[1], tokens[2]
            if type_name not in _PLY_TYPES:
                raise PlyParseError(f"{path}:{lineno}: unknown property type {type_name!r}")
            if prop_name in seen:
                raise PlyParseError(f"{path}:{lineno}: duplicate property {prop_name!r}")
            seen.add(prop_name)
            properties.append((prop_name, "<" + _PLY_TYPES[type_name]))
        else:
            raise PlyParseError(f"{path}:{lineno}: unrecognized header line: {line!r}")

    if fmt is None:
        raise PlyParseError(f"{path}: header has no format line")
    if count is None:
        raise PlyParseError(f"{path}: header declares no vertex element")

    missing = [p for p in REQUIRED_PROPERTIES if p not in seen]
    if missing:
        raise PlySchemaError(f"{path}: missing required splat properties: {', '.join(missing)}")
    mistyped = [name for name, dt in properties if name in _COLUMN_OF and dt != "<f4"]
    if mistyped:
        raise PlySchemaError(
            f"{path}: splat properties must be float32, wrong type for: {', '.join(mistyped)}"
        )
    return fmt, count, properties, body_offset


def read_ply(path: str | os.PathLike) -> GaussianCloud:
    """Read a 3DGS PLY file into a GaussianCloud.

    Raises PlyParseError for malformed headers (naming the offending line),
    PlySchemaError when required properties are missing, and PlyIOError for
    a truncated body (naming the byte offset where data ran out).
    """
    path = os.fspath(path)
    with open(path, "rb") as f:
        raw = f.read()
    fmt, count, properties, body_offset = _parse_header(raw, path)

    names = [name for name, _ in properties]
    if fmt == "binary":
        dtype = np.dtype([(name, dt) for name, dt in properties])
        needed = count * dtype.itemsize
        body = raw[body_offset:]
        if len(body) < needed:
            raise PlyIOError(
                f"{path}: truncated body at byte offset {body_offset + len(body)}: "
                f"expected {needed} body bytes for {count} vertices, got {len(body)}"
            )
        table = np.frombuffer(body[:needed], dtype=dtype)
    else:
        text = raw[body_offset:].decode("ascii", errors="replace")
        tokens = text.split()
        needed = count * len(properties)
        if len(tokens) < needed:
            raise PlyIOError(
                f"{path}: truncated ascii body at byte offset {body_offset}: "
                f"expected {needed} values for {count} vertices, got {len(tokens)}"
            )
        try:
            values = np.asarray(tokens[:needed], dtype=np.float64).reshape(count, len(properties))
        except ValueError as exc:
            raise PlyParseError(f"{path}: non-numeric value in ascii body: {exc}") from None
        table = np.empty(count, dtype=np.dtype([(name, dt) for name, dt in properties]))
        for j, (name, dt) in enumerate(properties):
            table[name] = values[:, j].astype(dt)

    data = np.empty((count, ATTR_COUNT), dtype=np.float32)
    extras: list[tuple[str, np.ndarray]] = []
    for name in names:
        if name in _COLUMN_OF:
            data[:, _COLUMN_OF[name]] = table[name]
        else:
            extras.append((name, np.ascontiguousarray(table[name])))
    return GaussianCloud(data=data, source_label=os.path.basename(path), extras=extras)


def write_ply(cloud: GaussianCloud, path: str | os.PathLike, encoding: str = "binary-LE") -> None:
    """Write a cloud with the canonical header; extras are appended after rot_3.

    ``encoding`` is ``"binary-LE"`` (little-endian float32 body) or
    ``"ascii"`` (shortest round-tripping decimal per value).
    """
    if encoding not in ("binary-LE", "ascii"):
        raise PlyIOError(f"unsupported encoding {encoding!r}; use 'binary-LE' or 'ascii'")
    path = os.fspath(path)

    fields: list[tuple[str, str]] = [(name, "<f4") for name in REQUIRED_PROPERTIES]
    for name, col in cloud.extras:
        fields.append((name, "<" + col.dtype.str.lstrip("<>=|")))

    header = io.StringIO()
    header.write("ply\n")
    header.write("format %s 1.0\n" % ("ascii" if encoding == "ascii" else "binary_little_endian"))
    header.write(f"element vertex {cloud.count}\n")
    for name, dt in fields:
        header.write(f"property {_TYPE_NAMES[dt.lstrip('<')]} {name}\n")
    header.write("end_header\n")

    table = np.empty(cloud.count, dtype=np.dtype(fields))
    for name in REQUIRED_PROPERTIES:
        table[name] = cloud.data[:, _COLUMN_OF[name]]
    for name, col in cloud.extras:
        table[name] = col

    try:
        with open(path, "wb") as f:
            f.write(header.getvalue().encode("ascii"))
            if encoding == "binary-LE":
                f.write(table.tobytes())
            else:
                out = io.StringIO()
                for i in range(cloud.count):
                    row = table[i]
                    out.write(" ".join(_format_value(row[name]) for name, _ in fields))
                    out.write("\n")
                f.write(out.getvalue().encode("ascii"))
    except OSError as exc:
        raise PlyIOError(f"cannot write {path}: {exc}") from exc


def _format_value(v) -> str:
    # str() of a numpy float scalar is the shortest repr that parses back
    # to the identical float, which keeps ascii round-trips exact.
    if np.issubdtype(np.asarray(v).dtype, np.integer):
        return str(int(v))
    return str(v)
