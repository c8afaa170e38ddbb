"""Legacy ASCII VTK output for triangle meshes, plus a reader for checking.

Files are written to a temporary name and moved into place, so a crash never
leaves a truncated file under the final name.
"""
from __future__ import annotations

import os
import tempfile

import numpy as np

from .mesh import Mesh


class VtkParseError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def write_vtk(
    path,
    mesh: Mesh,
    point_data: dict[str, np.ndarray] | None = None,
    cell_data: dict[str, np.ndarray] | None = None,
    title: str = "lipfrac fields",
) -> None:
    """Unstructured-grid snapshot; vector point fields have shape (2, n_nodes).

    Scalar fields (point or cell) are one-dimensional. The z component of
    points and vectors is written as 0.
    """
    point_data = point_data or {}
    cell_data = cell_data or {}
    n, m = mesh.n_nodes, mesh.n_elements
    for name, arr in point_data.items():
        if arr.shape not in ((n,), (2, n)):
            raise ValueError(f"point field {name!r} has shape {arr.shape}, want ({n},) or (2, {n})")
    for name, arr in cell_data.items():
        if arr.shape != (m,):
            raise ValueError(f"cell field {name!r} has shape {arr.shape}, want ({m},)")

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    for x, y in mesh.nodes:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0.0")
    lines.append(f"CELLS {m} {4 * m}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {m}")
    lines.extend(["5"] * m)

    if point_data:
        lines.append(f"POINT_DATA {n}")
        for name, arr in point_data.items():
            if arr.ndim == 2:
                lines.append(f"VECTORS {name} double")
                for j in range(n):
                    lines.append(f"{_fmt(arr[0, j])} {_fmt(arr[1, j])} 0.0")
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(_fmt(v) for v in arr)
    if cell_data:
        lines.append(f"CELL_DATA {m}")
        for name, arr in cell_data.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in arr)

    _atomic_write(path, "\n".join(lines) + "\n")


def _atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".vtk")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def read_vtk(path):
    """Parse a file produced by write_vtk: (nodes, triangles, point_data, cell_data).

    Covers only the constructs the writer emits; anything else raises
    VtkParseError. Vector fields come back with shape (2, n).
    """
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def take(count):
        nonlocal pos
        if pos + count > len(tokens):
            raise VtkParseError("unexpected end of file")
        out = tokens[pos : pos + count]
        pos += count
        return out

    def expect(word):
        got = take(1)[0]
        if got.upper() != word:
            raise VtkParseError(f"expected {word}, got {got!r}")

    take(5)  # "# vtk DataFile Version X.Y"
    # title runs to the ASCII keyword
    while take(1)[0].upper() != "ASCII":
        if pos > 200:
            raise VtkParseError("missing ASCII marker")
    expect("DATASET")
    expect("UNSTRUCTURED_GRID")
    expect("POINTS")
    n = int(take(1)[0])
    take(1)  # dtype
    coords = np.array(take(3 * n), dtype=float).reshape(n, 3)
    expect("CELLS")
    m = int(take(1)[0])
    total = int(take(1)[0])
    raw = np.array(take(total), dtype=int)
    tris = np.empty((m, 3), dtype=int)
    at = 0
    for e in range(m):
        if raw[at] != 3:
            raise VtkParseError("only triangle cells are supported")
        tris[e] = raw[at + 1 : at + 4]
        at += 4
    expect("CELL_TYPES")
    if int(take(1)[0]) != m:
        raise VtkParseError("cell type count mismatch")
    types = np.array(take(m), dtype=int)
    if not np.all(types == 5):
        raise VtkParseError("only VTK_TRIANGLE cells are supported")

    point_data: dict[str, np.ndarray] = {}
    cell_data: dict[str, np.ndarray] = {}
    target, count = None, 0
    while pos < len(tokens):
        word = take(1)[0].upper()
        if word == "POINT_DATA":
            target, count = point_data, int(take(1)[0])
        elif word == "CELL_DATA":
            target, count = cell_data, int(take(1)[0])
        elif word == "SCALARS":
            if target is None:
                raise VtkParseError("field data before POINT_DATA/CELL_DATA")
            name = take(1)[0]
            take(2)  # dtype, component count
            expect("LOOKUP_TABLE")
            take(1)  # table name
            target[name] = np.array(take(count), dtype=float)
        elif word == "VECTORS":
            if target is None:
                raise VtkParseError("field data before POINT_DATA/CELL_DATA")
            name = take(1)[0]
            take(1)  # dtype
            vec = np.array(take(3 * count), dtype=float).reshape(count, 3)
            target[name] = vec[:, :2].T.copy()
        else:
            raise VtkParseError(f"unsupported keyword {word!r}")
    return coords[:, :2], tris, point_data, cell_data
