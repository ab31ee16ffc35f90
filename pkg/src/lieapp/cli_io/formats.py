"""Grid JSON, report JSON and OBJ export.

Floats are written with 17 significant digits so that every double
survives a round trip and identical inputs give byte-identical files.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..config import InputError
from ..forms import GridShape, d_u, d_v
from ..legendre import SurfaceGrid

_FLOAT = "{:.17g}"


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        return _FLOAT.format(x)
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def dumps(obj, indent: int = 2) -> str:
    """Deterministic JSON text; non-finite floats become null."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


# ------------------------------------------------------------- surface grids

def grid_to_dict(grid: SurfaceGrid) -> dict:
    s = grid.shape
    x = np.asarray(grid.x, float)
    if not np.all(np.isfinite(x)):
        raise InputError("grid positions must be finite")
    out = {
        "m": s.m, "n": s.n, "du": s.du, "dv": s.dv,
        "periodic_u": s.periodic_u, "periodic_v": s.periodic_v,
        "positions": x.reshape(-1, 3).tolist(),
    }
    if grid.normal is not None:
        out["normals"] = np.asarray(grid.normal, float).reshape(-1, 3).tolist()
    return out


def grid_from_dict(d: dict, name: str = "json") -> SurfaceGrid:
    try:
        m, n = int(d["m"]), int(d["n"])
        shape = GridShape(m, n, float(d["du"]), float(d["dv"]),
                          bool(d.get("periodic_u", False)), bool(d.get("periodic_v", False)))
        x = np.asarray(d["positions"], float).reshape(m, n, 3)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed surface grid JSON: {exc}") from exc
    if m < 16 or n < 16:
        raise InputError("resolution must be at least 16 in each direction")
    if not np.all(np.isfinite(x)):
        raise InputError("grid positions must be finite")
    if "normals" in d and d["normals"] is not None:
        normal = np.asarray(d["normals"], float).reshape(m, n, 3)
    else:
        c = np.cross(d_u(x, shape), d_v(x, shape))
        normal = c / np.linalg.norm(c, axis=-1, keepdims=True)
    return SurfaceGrid(shape=shape, x=x, normal=normal, name=name)


def write_grid(path, grid: SurfaceGrid) -> Path:
    return write_json(path, grid_to_dict(grid))


def read_grid(path) -> SurfaceGrid:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read surface grid {path}: {exc}") from exc
    return grid_from_dict(d, name=path.stem)


# ------------------------------------------------------------- OBJ

def obj_text(x, keep=None, periodic=(False, False)) -> str:
    """Vertices row-major, then quads over kept nodes only (1-indexed)."""
    x = np.asarray(x, float)
    m, n = x.shape[:2]
    ok = np.all(np.isfinite(x), -1)
    if keep is not None:
        ok &= np.asarray(keep, bool)
    index = -np.ones((m, n), int)
    lines = []
    k = 0
    for i in range(m):
        for j in range(n):
            if ok[i, j]:
                k += 1
                index[i, j] = k
                lines.append("v " + " ".join(_FLOAT.format(c) for c in x[i, j]))
    mu = m if periodic[0] else m - 1
    nv = n if periodic[1] else n - 1
    for i in range(mu):
        for j in range(nv):
            quad = (index[i, j], index[(i + 1) % m, j], index[(i + 1) % m, (j + 1) % n], index[i, (j + 1) % n])
            if min(quad) > 0:
                lines.append("f " + " ".join(str(q) for q in quad))
    return "\n".join(lines) + "\n"


def write_obj(path, x, keep=None, periodic=(False, False)) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(obj_text(x, keep, periodic), encoding="utf-8")
    return path
