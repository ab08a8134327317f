"""Deterministic artifact writers: CSV, JSON, SVG heatmaps and schema checks.

CSV: header row, ``,`` separator, ``.`` decimal, LF endings, floats written
with ``repr`` (shortest round-trip form).  JSON: sorted keys, two-space
indent, NaN/inf written as ``null``.  SVG: one polygon per triangle coloured
from a fixed 256-step linear colormap, with min/max written into the file.
No timestamps are emitted anywhere, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import jsonschema
import numpy as np

from .mesh_fem import Mesh

SCHEMAS = ("config", "solve", "improve", "classify", "expansion", "soc", "homogenize", "decimal",
           "selftest", "manifest")


def _clean(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def canonical_hash(obj: Any) -> str:
    """SHA-256 of the compact, key-sorted JSON form."""
    text = json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    if name not in SCHEMAS:
        raise KeyError(f"unknown schema {name!r}")
    text = resources.files("ellopt").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def validate(obj: Any, name: str) -> None:
    """Raise ``jsonschema.ValidationError`` if ``obj`` does not match schema ``name``."""
    jsonschema.validate(_clean(obj), load_schema(name))


def write_json(path, obj: Any, schema: str | None = None) -> Path:
    if schema is not None:
        validate(obj, schema)
    path = Path(path)
    path.write_text(dumps(obj), newline="\n")
    return path


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        x = float(v)
        return repr(x) if math.isfinite(x) else "nan"
    return "" if v is None else str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=",", lineterminator="\n")
        w.writerow(list(header))
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# anchor colours of a perceptually ordered dark-blue -> yellow map
_ANCHORS = np.array([
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
], dtype=float)


@lru_cache(maxsize=1)
def colormap() -> tuple:
    """256 hex colours, linear interpolation between the anchors."""
    t = np.linspace(0.0, 1.0, 256) * (len(_ANCHORS) - 1)
    k = np.minimum(t.astype(int), len(_ANCHORS) - 2)
    w = (t - k)[:, None]
    rgb = np.rint((1 - w) * _ANCHORS[k] + w * _ANCHORS[k + 1]).astype(int)
    return tuple("#%02x%02x%02x" % tuple(c) for c in rgb)


def color_index(values: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    if vmax > vmin:
        s = (values - vmin) / (vmax - vmin)
    else:
        s = np.zeros_like(values)
    return np.clip(np.rint(s * 255), 0, 255).astype(int)


def write_svg_heatmap(path, mesh: Mesh, values, title: str, size: int = 512) -> Path:
    """Per-element heatmap; nodal input is averaged to element centroids."""
    values = np.asarray(values, dtype=float)
    if values.shape == (mesh.n_nodes,):
        values = values[mesh.elements].mean(axis=1)
    if values.shape != (mesh.n_elements,):
        raise ValueError("values must be nodal or per-element")
    vmin, vmax = float(values.min()), float(values.max())
    idx = color_index(values, vmin, vmax)
    cmap = colormap()
    pad, bar = 40, 24
    width, height = size + 2 * pad + bar + 60, size + 2 * pad
    xy = mesh.nodes * size
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" shape-rendering="crispEdges">',
        f'<title>{title}</title>',
        f'<desc>min={vmin!r} max={vmax!r} colormap=linear-256</desc>',
        f'<text x="{pad}" y="{pad - 12}" font-family="monospace" font-size="14">{title}</text>',
    ]
    for e, tri in enumerate(mesh.elements):
        pts = " ".join(f"{pad + xy[n, 0]:.2f},{pad + size - xy[n, 1]:.2f}" for n in tri)
        c = cmap[idx[e]]
        out.append(f'<polygon points="{pts}" fill="{c}" stroke="{c}" stroke-width="0.3"/>')
    x0 = pad + size + 20
    step = size / 256.0
    for k in range(256):
        y = pad + size - (k + 1) * step
        out.append(f'<rect x="{x0}" y="{y:.3f}" width="{bar}" height="{step + 0.05:.3f}" fill="{cmap[k]}"/>')
    out.append(f'<text x="{x0}" y="{pad - 2}" font-family="monospace" font-size="11">max {vmax:.6g}</text>')
    out.append(f'<text x="{x0}" y="{pad + size + 14}" font-family="monospace" font-size="11">min {vmin:.6g}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n", newline="\n")
    return path
