"""Invert a swept curve: which parameter meets a distortion, utility or privacy target."""

from __future__ import annotations

from dataclasses import dataclass

from .frontier import FrontierPoint, frontier


@dataclass(frozen=True)
class LookupResult:
    privatizer: str
    target: float
    status: str  # "ok" or "out-of-range"
    param: float | None = None
    achieved: float | None = None
    privacy: float | None = None
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _value(pt: FrontierPoint, key: str) -> float:
    return -pt.u1 if key == "distortion" else getattr(pt, key)


def _lerp(a: FrontierPoint, b: FrontierPoint, t: float, key: str) -> float:
    return _value(a, key) + t * (_value(b, key) - _value(a, key))


def invert_curve(points: list[FrontierPoint], key: str, target: float, upper_bound: bool = True) -> LookupResult:
    """Parameter at which ``key`` reaches ``target``, picking the candidate with the most privacy.

    ``key`` is ``"distortion"`` (``-U1``) or any :class:`FrontierPoint` field.
    With ``upper_bound`` the constraint is ``value <= target`` and grid points
    strictly inside the feasible set also count as candidates; otherwise only
    exact crossings do. Targets outside the swept range are reported as
    ``out-of-range``.
    """
    name = points[0].privatizer if points else "?"
    if not points:
        return LookupResult(name, target, "out-of-range", note="no points")
    vals = [_value(p, key) for p in points]
    lo, hi = min(vals), max(vals)
    if not lo <= target <= hi:
        return LookupResult(name, target, "out-of-range", note=f"swept {key} range is [{lo:.4g}, {hi:.4g}]")
    cands = []  # (privacy, param, value)
    for a, b in zip(points, points[1:]):
        va, vb = _value(a, key), _value(b, key)
        if min(va, vb) <= target <= max(va, vb):
            t = 0.0 if vb == va else (target - va) / (vb - va)
            cands.append((a.p + t * (b.p - a.p), a.param + t * (b.param - a.param), target))
    for p in points:
        v = _value(p, key)
        if v == target or (upper_bound and v <= target):
            cands.append((p.p, p.param, v))
    privacy, param, value = max(cands, key=lambda c: (c[0], -c[1]))
    return LookupResult(name, target, "ok", float(param), float(value), float(privacy))


def _curves(rows_or_frontier):
    if isinstance(rows_or_frontier, dict):
        return rows_or_frontier
    return frontier(rows_or_frontier)


def param_for_distortion(rows_or_frontier, target: float, privatizers=None) -> dict[str, LookupResult]:
    """Per privatizer, the parameter meeting ``-U1 <= target`` with maximal composite privacy."""
    curves = _curves(rows_or_frontier)
    return {n: invert_curve(c, "distortion", target) for n, c in curves.items() if privatizers is None or n in privatizers}


def param_for_utility(rows_or_frontier, target: float, privatizers=None) -> dict[str, LookupResult]:
    """Per privatizer, the parameter at which composite utility equals ``target``."""
    curves = _curves(rows_or_frontier)
    return {n: invert_curve(c, "u", target, upper_bound=False) for n, c in curves.items() if privatizers is None or n in privatizers}


def param_for_privacy(rows_or_frontier, target: float, privatizers=None) -> dict[str, LookupResult]:
    """Per privatizer, the parameter at which composite privacy equals ``target``."""
    curves = _curves(rows_or_frontier)
    return {n: invert_curve(c, "p", target, upper_bound=False) for n, c in curves.items() if privatizers is None or n in privatizers}
