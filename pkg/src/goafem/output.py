"""CSV and SVG outputs of adaptive runs.

The SVG writers build the markup by hand so that the bytes depend only on
the input data: coordinates are printed with ``%.10g`` and colors come from a
fixed palette.

Level palette
-------------
Triangles are colored by ``log2(1/|T|)``, rescaled linearly from the
smallest to the largest value on the mesh onto the anchor colors::

    #30123b  #4662d7  #36aaf9  #1ae4b6  #72fe5e  #c8ef34  #faba39  #f66b19  #ca2a04

(a sampled "turbo" ramp), with linear RGB interpolation between anchors.
A mesh where all triangles have equal area is drawn with the first anchor.
"""
import csv
import math
from dataclasses import fields

import numpy as np

from .driver import AdaptiveRecord

__all__ = [
    "CSV_HEADER",
    "PALETTE",
    "write_csv",
    "read_csv",
    "level_values",
    "level_color",
    "render_level_svg",
    "render_convergence_svg",
]

CSV_HEADER = tuple(f.name for f in fields(AdaptiveRecord))
PALETTE = ("#30123b", "#4662d7", "#36aaf9", "#1ae4b6", "#72fe5e",
           "#c8ef34", "#faba39", "#f66b19", "#ca2a04")
_INT_FIELDS = {"iter", "ntri", "nedges", "ndof", "nmarked"}


def _fmt(x):
    return f"{x:.10g}"


def write_csv(records, path, timing=True):
    """Write records to ``path``, one row per record sorted by iteration.

    Floats are written with 17 significant digits, so reading them back
    reproduces the doubles exactly.  With ``timing=False`` the ``seconds``
    column is written as ``0`` to make the file reproducible byte for byte.
    """
    if not records:
        raise ValueError("no records to write")
    rows = sorted(records, key=lambda r: r.iter)
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            out = []
            for name in CSV_HEADER:
                v = getattr(r, name)
                if name == "seconds" and not timing:
                    v = 0.0
                out.append(str(int(v)) if name in _INT_FIELDS else f"{float(v):.17g}")
            w.writerow(out)


def read_csv(path):
    """Read a CSV written by :func:`write_csv` back into records."""
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected header in {path}")
        return [AdaptiveRecord(**{k: int(v) if k in _INT_FIELDS else float(v)
                                  for k, v in row.items()}) for row in reader]


def level_values(mesh):
    """``log2(1 / |T|)`` for every triangle."""
    return -np.log2(mesh.areas)


def _hex_to_rgb(h):
    return tuple(int(h[i:i + 2], 16) for i in (1, 3, 5))


def level_color(t):
    """Palette color for ``t`` in [0, 1] as ``#rrggbb``."""
    t = min(max(float(t), 0.0), 1.0) * (len(PALETTE) - 1)
    i = min(int(math.floor(t)), len(PALETTE) - 2)
    s = t - i
    c0, c1 = _hex_to_rgb(PALETTE[i]), _hex_to_rgb(PALETTE[i + 1])
    rgb = [round((1 - s) * a + s * b) for a, b in zip(c0, c1)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def render_level_svg(mesh, path, width=600):
    """Draw ``mesh`` with triangles colored by ``log2(1/|T|)`` plus a legend.

    Every polygon carries its level in a ``data-level`` attribute.
    """
    levels = level_values(mesh)
    lo, hi = float(levels.min()), float(levels.max())
    span = hi - lo
    (x0, y0), (x1, y1) = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    scale = width / max(x1 - x0, y1 - y0)
    pad, legend_w = 10, 90
    W = width + 2 * pad + legend_w
    H = (y1 - y0) * scale + 2 * pad
    X = (mesh.vertices[:, 0] - x0) * scale + pad
    Y = (y1 - mesh.vertices[:, 1]) * scale + pad

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
           f'width="{_fmt(W)}" height="{_fmt(H)}" viewBox="0 0 {_fmt(W)} {_fmt(H)}">',
           '<g stroke="#000000" stroke-width="0.2" stroke-linejoin="round">']
    for t, tri in enumerate(mesh.triangles):
        pts = " ".join(f"{_fmt(X[v])},{_fmt(Y[v])}" for v in tri)
        color = level_color((levels[t] - lo) / span if span > 0 else 0.0)
        out.append(f'<polygon points="{pts}" fill="{color}" data-level="{_fmt(levels[t])}"/>')
    out.append("</g>")

    # legend: vertical ramp with the extreme levels
    lx, ly, lh, n = width + 2 * pad + 10, pad, min(H - 2 * pad, 300.0), 32
    out.append('<g id="legend" font-family="sans-serif" font-size="10">')
    for k in range(n):
        c = level_color(1 - k / (n - 1))
        out.append(f'<rect x="{_fmt(lx)}" y="{_fmt(ly + k * lh / n)}" width="16" '
                   f'height="{_fmt(lh / n + 0.5)}" fill="{c}"/>')
    out.append(f'<text x="{_fmt(lx + 20)}" y="{_fmt(ly + 8)}">{_fmt(hi)}</text>')
    out.append(f'<text x="{_fmt(lx + 20)}" y="{_fmt(ly + lh)}">{_fmt(lo)}</text>')
    out.append(f'<text x="{_fmt(lx)}" y="{_fmt(ly + lh + 14)}">log2(1/|T|)</text>')
    out.append("</g>")
    out.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def _series(records, goal_oriented):
    n = np.array([r.ntri for r in records], dtype=float)
    eta = np.sqrt([r.eta2 for r in records])
    if not goal_oriented:
        return n, [("eta", eta, "#1f4e9c")]
    eta_star = np.sqrt([r.eta_star2 for r in records])
    return n, [("eta", eta, "#1f4e9c"), ("eta*", eta_star, "#c0392b"),
               ("eta*eta*", eta * eta_star, "#2e8b57")]


def render_convergence_svg(records, path, p=1, goal_oriented=False, width=520, height=400):
    """Log-log convergence plot (log10 axes) of the estimators against ``#T``.

    Reference slope triangles for ``-p/2`` and ``-p`` are drawn in the lower
    left corner.
    """
    n, series = _series(records, goal_oriented)
    lx = np.log10(n)
    ys = [np.log10(np.maximum(s, 1e-300)) for _, s, _ in series]
    xmin, xmax = math.floor(lx.min()), math.ceil(lx.max())
    if xmax == xmin:
        xmax += 1
    ymin = math.floor(min(y.min() for y in ys))
    ymax = math.ceil(max(y.max() for y in ys))
    if ymax == ymin:
        ymax += 1
    ml, mr, mt, mb = 60, 110, 20, 45
    pw, ph = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (x - xmin) / (xmax - xmin) * pw

    def py(y):
        return mt + (ymax - y) / (ymax - ymin) * ph

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
           f'height="{height}" viewBox="0 0 {width} {height}">',
           '<g font-family="sans-serif" font-size="11">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#000000"/>']
    for d in range(xmin, xmax + 1):
        out.append(f'<line x1="{_fmt(px(d))}" y1="{mt}" x2="{_fmt(px(d))}" y2="{mt + ph}" '
                   'stroke="#dddddd"/>')
        out.append(f'<text x="{_fmt(px(d))}" y="{mt + ph + 15}" text-anchor="middle">'
                   f'1e{d}</text>')
    for d in range(ymin, ymax + 1):
        out.append(f'<line x1="{ml}" y1="{_fmt(py(d))}" x2="{ml + pw}" y2="{_fmt(py(d))}" '
                   'stroke="#dddddd"/>')
        out.append(f'<text x="{ml - 5}" y="{_fmt(py(d) + 4)}" text-anchor="end">1e{d}</text>')
    out.append(f'<text x="{_fmt(ml + pw / 2)}" y="{height - 8}" text-anchor="middle">'
               'number of triangles</text>')

    for k, ((label, _, color), y) in enumerate(zip(series, ys)):
        pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(lx, y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for a, b in zip(lx, y):
            out.append(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(b))}" r="2" fill="{color}"/>')
        yl = mt + 14 + 16 * k
        out.append(f'<line x1="{ml + pw + 10}" y1="{yl - 4}" x2="{ml + pw + 30}" y2="{yl - 4}" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{yl}">{label}</text>')

    # slope triangles, one decade wide, anchored near the lower left corner
    x0 = xmin + 0.15 * (xmax - xmin)
    y0 = ymin + 0.25 * (ymax - ymin)
    for j, slope in enumerate((-p / 2, -p)):
        xa = x0 + 1.1 * j
        pts = [(xa, y0), (xa + 1, y0 + slope), (xa, y0 + slope)]
        poly = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in pts)
        out.append(f'<polygon points="{poly}" fill="none" stroke="#555555"/>')
        out.append(f'<text x="{_fmt(px(xa) - 4)}" y="{_fmt(py(y0 + slope / 2))}" '
                   f'text-anchor="end">{_fmt(slope)}</text>')
    out.append("</g>")
    out.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
