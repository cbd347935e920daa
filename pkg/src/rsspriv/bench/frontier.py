"""Seed-averaged privacy-utility curves, their CSV form and a plain SVG plot."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from xml.sax.saxutils import escape

import numpy as np

from .sweep import TradeoffRow

_METRICS = ("p1", "p2", "p", "u1", "u2", "u", "rmse_dbm")


@dataclass(frozen=True)
class FrontierPoint:
    privatizer: str
    param: float
    n_seeds: int
    p1: float
    p2: float
    p: float
    p_std: float
    u1: float
    u2: float
    u: float
    u_std: float
    rmse_dbm: float


FRONTIER_COLUMNS = tuple(f.name for f in fields(FrontierPoint))


def _std(v: np.ndarray) -> float:
    return float(v.std(ddof=1)) if len(v) > 1 else 0.0


def frontier(rows, variant: str = "baseline") -> dict[str, list[FrontierPoint]]:
    """Group successful rows by privatizer, average over seeds, sort by parameter.

    Privatizers keep their first-seen order.
    """
    groups: dict[str, dict[float, list[TradeoffRow]]] = {}
    for r in rows:
        if r.ok and r.variant == variant:
            groups.setdefault(r.privatizer, {}).setdefault(r.param, []).append(r)
    out = {}
    for name, by_param in groups.items():
        pts = []
        for param in sorted(by_param):
            rs = by_param[param]
            vals = {m: np.array([getattr(r, m) for r in rs]) for m in _METRICS}
            pts.append(FrontierPoint(
                name, param, len(rs),
                float(vals["p1"].mean()), float(vals["p2"].mean()), float(vals["p"].mean()), _std(vals["p"]),
                float(vals["u1"].mean()), float(vals["u2"].mean()), float(vals["u"].mean()), _std(vals["u"]),
                float(vals["rmse_dbm"].mean()),
            ))
        out[name] = pts
    return out


def write_frontier_csv(points, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRONTIER_COLUMNS)
        for pt in points:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(pt, c) for c in FRONTIER_COLUMNS)])


def interpolate_at(points, x_key: str, y_key: str, x: float) -> float | None:
    """Piecewise-linear ``y`` at ``x`` along the curve ordered by parameter; ``None`` if ``x`` is never crossed.

    When several segments cross ``x`` the largest ``y`` is returned.
    """
    best = None
    for a, b in zip(points, points[1:]):
        xa, xb = getattr(a, x_key), getattr(b, x_key)
        lo, hi = min(xa, xb), max(xa, xb)
        if lo <= x <= hi:
            t = 0.0 if xb == xa else (x - xa) / (xb - xa)
            y = getattr(a, y_key) + t * (getattr(b, y_key) - getattr(a, y_key))
            best = y if best is None else max(best, y)
    if best is None and len(points) == 1 and getattr(points[0], x_key) == x:
        best = getattr(points[0], y_key)
    return best


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def write_svg(frontiers: dict[str, list[FrontierPoint]], path, width: int = 640, height: int = 440) -> None:
    """Composite privacy (x) against composite utility (y), one polyline per privatizer."""
    pts = [(pt.p, pt.u) for curve in frontiers.values() for pt in curve if math.isfinite(pt.p) and math.isfinite(pt.u)]
    margin = 60
    if pts:
        xs, ys = zip(*pts)
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, -1.0, 0.0
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(v):
        return margin + (v - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - y0) / (y1 - y0) * (height - 2 * margin)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 15}" text-anchor="middle" font-size="13">composite privacy P</text>',
        f'<text x="18" y="{height / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {height / 2})">composite utility U</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        lines.append(f'<text x="{sx(xv):.1f}" y="{height - margin + 16}" text-anchor="middle" font-size="10">{xv:.2f}</text>')
        lines.append(f'<text x="{margin - 6}" y="{sy(yv) + 3:.1f}" text-anchor="end" font-size="10">{yv:.2f}</text>')
    for i, (name, curve) in enumerate(frontiers.items()):
        color = _COLORS[i % len(_COLORS)]
        good = [pt for pt in curve if math.isfinite(pt.p) and math.isfinite(pt.u)]
        if len(good) > 1:
            path_pts = " ".join(f"{sx(pt.p):.1f},{sy(pt.u):.1f}" for pt in good)
            lines.append(f'<polyline points="{path_pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for pt in good:
            lines.append(f'<circle cx="{sx(pt.p):.1f}" cy="{sy(pt.u):.1f}" r="3" fill="{color}"/>')
        ly = margin + 16 * i
        lines.append(f'<rect x="{width - margin - 70}" y="{ly - 8}" width="10" height="10" fill="{color}"/>')
        lines.append(f'<text x="{width - margin - 55}" y="{ly + 1}" font-size="11">{escape(name)}</text>')
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
