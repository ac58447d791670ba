"""Level-set polylines of planar functions, written as CSV and SVG."""

from __future__ import annotations

import csv
from typing import Callable, Dict, List, Sequence

import numpy as np

from .interval import Box
from .linalg import DimensionError

DEFAULT_RESOLUTION = 400
PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def level_curves(fn: Callable[[np.ndarray], np.ndarray], domain: Box, levels: Sequence[float],
                 resolution: int = DEFAULT_RESOLUTION) -> Dict[float, List[np.ndarray]]:
    """Marching-squares polylines of ``fn = level`` over a uniform grid.

    ``fn`` maps an ``(m, 2)`` array of points to ``m`` values.  Each polyline
    is an ``(k, 2)`` array in state coordinates; closed curves repeat their
    first vertex at the end.
    """
    from skimage import measure

    domain = Box(domain)
    if domain.dim != 2:
        raise DimensionError(f"contours need a planar system, got dimension {domain.dim}")
    xs = np.linspace(domain.lo[0], domain.hi[0], resolution)
    ys = np.linspace(domain.lo[1], domain.hi[1], resolution)
    G = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    Z = np.asarray(fn(G), float).reshape(resolution, resolution)
    dx = xs[1] - xs[0]
    dy = ys[1] - ys[0]
    out = {}
    for lv in levels:
        curves = []
        if np.nanmin(Z) <= lv <= np.nanmax(Z):
            for c in measure.find_contours(Z, lv):
                curves.append(np.column_stack([xs[0] + c[:, 0] * dx, ys[0] + c[:, 1] * dy]))
        out[float(lv)] = curves
    return out


def write_csv(curves: Dict[str, Dict[float, List[np.ndarray]]], path) -> None:
    """One row per vertex: ``function,level,curve,vertex,x1,x2``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["function", "level", "curve", "vertex", "x1", "x2"])
        for name, by_level in curves.items():
            for lv, polys in by_level.items():
                for ci, poly in enumerate(polys):
                    for vi, (a, b) in enumerate(poly):
                        w.writerow([name, repr(lv), ci, vi, repr(float(a)), repr(float(b))])


def write_svg(curves: Dict[str, Dict[float, List[np.ndarray]]], domain: Box, path,
              size: int = 600) -> None:
    """Standalone SVG with the domain frame and one path per level."""
    domain = Box(domain)
    (x0, x1), (y0, y1) = domain.to_list()
    sx = size / (x1 - x0)
    sy = size / (y1 - y0)
    s = min(sx, sy)
    W = (x1 - x0) * s
    H = (y1 - y0) * s
    pad = 20

    def pt(a, b):
        return f"{pad + (a - x0) * s:.3f},{pad + (y1 - b) * s:.3f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W + 2 * pad:.0f}" '
        f'height="{H + 2 * pad:.0f}" viewBox="0 0 {W + 2 * pad:.3f} {H + 2 * pad:.3f}">',
        f'<rect x="{pad}" y="{pad}" width="{W:.3f}" height="{H:.3f}" fill="none" '
        f'stroke="black" stroke-width="1"/>',
    ]
    k = 0
    for name, by_level in curves.items():
        for lv, polys in by_level.items():
            color = PALETTE[k % len(PALETTE)]
            k += 1
            d = " ".join("M " + " L ".join(pt(a, b) for a, b in poly) for poly in polys)
            parts.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5">'
                         f"<title>{name} = {lv:g}</title></path>")
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def export_contours(functions: Dict[str, tuple], domain: Box, csv_path, svg_path,
                    resolution: int = DEFAULT_RESOLUTION):
    """``functions`` maps a name to ``(fn, levels)``; returns the polylines."""
    domain = Box(domain)
    if domain.dim != 2:
        raise DimensionError(f"contours need a planar system, got dimension {domain.dim}")
    curves = {name: level_curves(fn, domain, levels, resolution)
              for name, (fn, levels) in functions.items()}
    write_csv(curves, csv_path)
    write_svg(curves, domain, svg_path)
    return curves
