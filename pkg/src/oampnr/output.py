"""Tabular (CSV/JSON) and SVG emitters shared by the CLI.

CSV files start with a ``# digest: <hex>`` comment line followed by the
column header; floats are written with ``repr`` so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError

DIGEST_PREFIX = "# digest: "


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_cell(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_table(path: str | Path, columns: Sequence[str], rows, digest: str, fmt: str = "csv") -> Path:
    path = Path(path)
    if fmt == "csv":
        path = path.with_suffix(".csv")
        buf = io.StringIO()
        buf.write(DIGEST_PREFIX + digest + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(v) for v in r])
        path.write_text(buf.getvalue())
    elif fmt == "json":
        path = path.with_suffix(".json")
        doc = {"digest": digest, "columns": list(columns), "rows": [[_json_cell(v) for v in r] for r in rows]}
        path.write_text(json.dumps(doc, indent=1) + "\n")
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    return path


def read_table(path: str | Path) -> tuple[str, list[str], list[list[str]]]:
    """Returns (digest, columns, rows) for either format; cells stay as text for CSV."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        doc = json.loads(text)
        return doc["digest"], doc["columns"], doc["rows"]
    lines = text.splitlines()
    if not lines or not lines[0].startswith(DIGEST_PREFIX):
        raise ConfigError(f"{path}: missing digest line")
    reader = list(csv.reader(lines[1:]))
    return lines[0][len(DIGEST_PREFIX):], reader[0], reader[1:]


def write_json(path: str | Path, doc: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_cell) + "\n")
    return path


def require_same_digest(*digests: str) -> str:
    if len(set(digests)) != 1:
        raise ConfigError(f"outputs from different profiles cannot be combined: {sorted(set(digests))}")
    return digests[0]


# SVG

_W, _H, _PAD = 480, 360, 48


def _color(t: float) -> str:
    # dark blue -> white -> dark red
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        u = t / 0.5
        r, g, b = 30 + 225 * u, 60 + 195 * u, 140 + 115 * u
    else:
        u = (t - 0.5) / 0.5
        r, g, b = 255 - 75 * u, 255 - 215 * u, 255 - 215 * u
    return "#%02x%02x%02x" % (round(r), round(g), round(b))


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def svg_heatmap(path: str | Path, values: np.ndarray, xlabels: Sequence, ylabels: Sequence, title: str,
                xname: str = "", yname: str = "", center: float | None = None) -> Path:
    """Rows of ``values`` run along y (top to bottom), columns along x."""
    v = np.asarray(values, dtype=float)
    ny, nx = v.shape
    lo, hi = float(v.min()), float(v.max())
    if center is not None:
        span = max(hi - center, center - lo) or 1.0
        lo, hi = center - span, center + span
    span = (hi - lo) or 1.0
    cw = (_W - 2 * _PAD) / nx
    ch = (_H - 2 * _PAD) / ny
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" font-family="sans-serif" font-size="10">',
           f'<text x="{_W / 2}" y="16" text-anchor="middle" font-size="12">{title}</text>']
    for i in range(ny):
        for j in range(nx):
            out.append(f'<rect x="{_PAD + j * cw:.2f}" y="{_PAD + i * ch:.2f}" width="{cw + 0.05:.2f}" '
                       f'height="{ch + 0.05:.2f}" fill="{_color((v[i, j] - lo) / span)}"/>')
    step_x = max(1, nx // 10)
    for j in range(0, nx, step_x):
        out.append(f'<text x="{_PAD + (j + 0.5) * cw:.2f}" y="{_H - _PAD + 12}" text-anchor="middle">{xlabels[j]}</text>')
    step_y = max(1, ny // 10)
    for i in range(0, ny, step_y):
        out.append(f'<text x="{_PAD - 4}" y="{_PAD + (i + 0.5) * ch + 3:.2f}" text-anchor="end">{ylabels[i]}</text>')
    out.append(f'<text x="{_W / 2}" y="{_H - 8}" text-anchor="middle">{xname}</text>')
    out.append(f'<text x="12" y="{_H / 2}" transform="rotate(-90 12 {_H / 2})" text-anchor="middle">{yname}</text>')
    out.append(f'<text x="{_W - 4}" y="{_PAD - 6}" text-anchor="end">[{_fmt(float(v.min()))}, {_fmt(float(v.max()))}]</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path


_PALETTE = ("#1f4e99", "#b03030", "#2e8b57", "#8a5a00", "#6a3d9a", "#444444")


def svg_curves(path: str | Path, x: Sequence[float], curves: dict[str, Sequence[float]], title: str,
               xname: str = "", normalize: bool = False) -> Path:
    """Line plot of named curves sharing the x axis; ``normalize`` scales each to max 1."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in curves.items()}
    if normalize:
        ys = {k: v / v.max() if v.max() != 0 else v for k, v in ys.items()}
    lo = min(float(v.min()) for v in ys.values())
    hi = max(float(v.max()) for v in ys.values())
    if math.isclose(lo, hi):
        lo, hi = lo - 0.5, hi + 0.5
    x0, x1 = float(x.min()), float(x.max()) if x.max() > x.min() else float(x.min()) + 1

    def px(xv):
        return _PAD + (xv - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def py(yv):
        return _H - _PAD - (yv - lo) / (hi - lo) * (_H - 2 * _PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" font-family="sans-serif" font-size="10">',
           f'<text x="{_W / 2}" y="16" text-anchor="middle" font-size="12">{title}</text>',
           f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" fill="none" stroke="#888"/>']
    for k, (name, v) in enumerate(ys.items()):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, v))
        col = _PALETTE[k % len(_PALETTE)]
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{_W - _PAD + 4}" y="{_PAD + 12 * (k + 1)}" fill="{col}">{name}</text>')
    for xv in np.linspace(x0, x1, 5):
        out.append(f'<text x="{px(xv):.2f}" y="{_H - _PAD + 12}" text-anchor="middle">{_fmt(xv)}</text>')
    for yv in np.linspace(lo, hi, 5):
        out.append(f'<text x="{_PAD - 4}" y="{py(yv) + 3:.2f}" text-anchor="end">{_fmt(yv)}</text>')
    out.append(f'<text x="{_W / 2}" y="{_H - 8}" text-anchor="middle">{xname}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path
