"""Wavefront OBJ reading and writing with the per-vertex colour extension.

Only ``v`` and ``f`` records are interpreted.  A ``v`` line carries either
3 coordinates or 3 coordinates followed by 3 colour channels; a file must
use one form throughout.  Polygon faces are fan-triangulated.
"""
from __future__ import annotations

import io
import logging
import os
from typing import Union

import numpy as np

from .exceptions import FaceIndexOutOfRange, ObjFormatError
from .mesh import Mesh, dedupe_faces

logger = logging.getLogger(__name__)

Source = Union[bytes, str, os.PathLike, io.IOBase]


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8", errors="replace")
    if isinstance(source, io.IOBase):
        data = source.read()
        return data.decode("utf-8", errors="replace") if isinstance(data, bytes) else data
    if isinstance(source, str) and ("\n" in source or source.lstrip().startswith(("v ", "f ", "#"))):
        return source
    with open(source, "rb") as fh:
        return fh.read().decode("utf-8", errors="replace")


def _face_index(token: str, n_vertices: int, lineno: int) -> int:
    head = token.split("/", 1)[0]
    try:
        idx = int(head)
    except ValueError:
        raise ObjFormatError(f"line {lineno}: non-integer face index {token!r}") from None
    if idx < 0:
        # relative index: -1 is the most recently defined vertex
        idx = n_vertices + idx
    else:
        idx -= 1
    return idx


def parse_obj(source: Source) -> Mesh:
    """Parse OBJ text (bytes, text, path or open file) into a :class:`Mesh`.

    Colours given as 0-255 integers are rescaled to ``[0, 1]``.

    Raises
    ------
    ObjFormatError
        Non-numeric fields, faces with fewer than 3 indices, or a mix of
        coloured and uncoloured vertex lines.
    FaceIndexOutOfRange
        A face references a vertex that does not exist.
    """
    text = _read_text(source)
    coords: list[list[float]] = []
    colors: list[list[float]] = []
    raw_faces: list[tuple[int, list[str]]] = []
    colored = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "v":
            fields = parts[1:]
            if len(fields) not in (3, 4, 6, 7):
                raise ObjFormatError(f"line {lineno}: vertex needs 3 or 6 numbers, got {len(fields)}")
            try:
                values = [float(x) for x in fields]
            except ValueError:
                raise ObjFormatError(f"line {lineno}: non-numeric vertex field") from None
            has_color = len(values) >= 6
            if colored is None:
                colored = has_color
            elif colored != has_color:
                raise ObjFormatError(f"line {lineno}: mixed colored and uncolored vertex lines")
            coords.append(values[:3])
            if has_color:
                colors.append(values[3:6] if len(values) == 6 else values[4:7])
        elif tag == "f":
            if len(parts) < 4:
                raise ObjFormatError(f"line {lineno}: face needs at least 3 indices")
            raw_faces.append((lineno, parts[1:]))

    n = len(coords)
    faces = []
    dropped = 0
    for lineno, tokens in raw_faces:
        idx = [_face_index(t, n, lineno) for t in tokens]
        for i in idx:
            if not 0 <= i < n:
                raise FaceIndexOutOfRange(f"line {lineno}: vertex index {i + 1} out of range 1..{n}")
        for k in range(1, len(idx) - 1):
            tri = (idx[0], idx[k], idx[k + 1])
            if len(set(tri)) < 3:
                dropped += 1
                continue
            faces.append(tri)
    if dropped:
        logger.warning("dropping %d degenerate face(s)", dropped)

    vertices = np.array(coords, dtype=np.float64).reshape(-1, 3)
    face_arr = dedupe_faces(np.array(faces, dtype=np.int64).reshape(-1, 3))
    color_arr = None
    if colored:
        color_arr = np.array(colors, dtype=np.float64)
        if color_arr.max(initial=0.0) > 1.0:
            color_arr = color_arr / 255.0
        if color_arr.min(initial=0.0) < 0.0 or color_arr.max(initial=0.0) > 1.0:
            raise ObjFormatError("vertex colors outside [0, 1] (or [0, 255])")
    return Mesh(vertices, face_arr, color_arr)


def format_obj(mesh: Mesh, colors=None) -> str:
    """Serialise ``mesh`` as OBJ text.  ``colors`` overrides ``mesh.colors``."""
    colors = mesh.colors if colors is None else np.asarray(colors, dtype=np.float64)
    out = io.StringIO()
    out.write(f"# {mesh.n_vertices} vertices, {mesh.n_faces} faces\n")
    if colors is None:
        for x, y, z in mesh.vertices.tolist():
            out.write(f"v {x!r} {y!r} {z!r}\n")
    else:
        for (x, y, z), (r, g, b) in zip(mesh.vertices.tolist(), colors.tolist()):
            out.write(f"v {x!r} {y!r} {z!r} {r!r} {g!r} {b!r}\n")
    for a, b, c in (mesh.faces + 1).tolist():
        out.write(f"f {a} {b} {c}\n")
    return out.getvalue()


def write_obj(mesh: Mesh, path, colors=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_obj(mesh, colors))
