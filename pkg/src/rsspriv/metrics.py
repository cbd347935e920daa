"""Privacy and utility metrics.

All logarithms are natural (nats). Locations are compared in normalized
feature units as planar coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import DimensionError, check_labels, check_same_shape

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class MetricWeights:
    v1: float = 1.0
    v2: float = 1.0
    w1: float = 1.0
    w2: float = 1.0

    def __post_init__(self):
        if min(self.v1, self.v2, self.w1, self.w2) < 0:
            raise ValueError("metric weights must be non-negative")

    @classmethod
    def from_dict(cls, d: dict | None) -> "MetricWeights":
        return cls(**(d or {}))


@dataclass(frozen=True)
class PrivacyReport:
    p1: float
    p2: float
    p1_ce: float
    composite: float


@dataclass(frozen=True)
class UtilityReport:
    u1: float
    u2: float
    composite: float


def _locs(a, name):
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DimensionError(f"{name} must be n x 2, got {arr.shape}")
    return arr


def p1_error(est_labels, true_labels) -> float:
    """User-ID error rate, ``1 - accuracy``."""
    est = np.asarray(est_labels)
    true = np.asarray(true_labels)
    if est.shape != true.shape or est.ndim != 1:
        raise DimensionError(f"label vectors disagree: {est.shape} vs {true.shape}")
    if est.size == 0:
        raise ValueError("p1_error needs at least one label")
    return float(1.0 - np.mean(est == true))


def p2_error(est_locs, true_locs) -> float:
    """Mean Euclidean distance between estimated and true (lat, lon)."""
    est, true = _locs(est_locs, "est_locs"), _locs(true_locs, "true_locs")
    check_same_shape(est, true, ("est_locs", "true_locs"))
    return float(np.mean(np.sqrt(np.sum((est - true) ** 2, axis=1))))


def _check_stochastic(probs: np.ndarray) -> None:
    if probs.ndim != 2:
        raise DimensionError(f"probs must be n x k, got {probs.shape}")
    if np.any(probs < 0) or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-6, rtol=0):
        raise ValueError("probs rows must be non-negative and sum to 1 (+-1e-6)")


def p1_cross_entropy(probs, true_labels) -> float:
    """Mean negative log-probability assigned to the true user (probabilities floored at 1e-12)."""
    probs = np.asarray(probs, dtype=np.float64)
    _check_stochastic(probs)
    labels = check_labels(true_labels, probs.shape[0], "true_labels")
    p = probs[np.arange(probs.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(p, PROB_FLOOR))))


def adversary_loss(probs, est_locs, true_labels, true_locs, w: MetricWeights = MetricWeights(), return_grad=False):
    """Adversary training loss ``v1 * P1ce + v2 * P2``.

    With ``return_grad`` also returns ``(dL/dprobs, dL/dest_locs)``. The
    distance gradient is taken as zero on rows where the estimate is exact.
    """
    probs = np.asarray(probs, dtype=np.float64)
    est = _locs(est_locs, "est_locs")
    true = _locs(true_locs, "true_locs")
    check_same_shape(est, true, ("est_locs", "true_locs"))
    loss = w.v1 * p1_cross_entropy(probs, true_labels) + w.v2 * p2_error(est, true)
    if not return_grad:
        return loss
    n = probs.shape[0]
    labels = check_labels(true_labels, n)
    rows = np.arange(n)
    g_probs = np.zeros_like(probs)
    p = probs[rows, labels]
    g_probs[rows, labels] = np.where(p > PROB_FLOOR, -w.v1 / (n * np.maximum(p, PROB_FLOOR)), 0.0)
    return loss, g_probs, w.v2 * distance_grad(est, true)


def distance_grad(est: np.ndarray, true: np.ndarray) -> np.ndarray:
    """Gradient of ``mean_i ||est_i - true_i||`` with respect to ``est``."""
    diff = est - true
    norm = np.sqrt(np.sum(diff**2, axis=1, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    return np.where(norm > 0, diff / safe, 0.0) / est.shape[0]


def u1_distortion(x, y) -> float:
    """Negative mean row-wise L2 distance between input and obfuscated features."""
    x = getattr(x, "values", x)
    y = getattr(y, "values", y)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    check_same_shape(x, y)
    if x.ndim != 2:
        raise DimensionError("u1_distortion expects n x m matrices")
    return float(-np.mean(np.sqrt(np.sum((y - x) ** 2, axis=1))))


def u1_grad(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of U1 with respect to ``y`` (zero on undistorted rows)."""
    return -distance_grad(y, x)


def u2_map_error(x, y, ridge: float = 0.0) -> float:
    """Negative L1 distance between the RSS-model parameters fit on ``x`` and on ``y``."""
    from . import rssmap

    x = getattr(x, "values", x)
    y = getattr(y, "values", y)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    check_same_shape(x, y)
    ax = rssmap.fit(x, ridge).alpha
    ay = rssmap.fit(y, ridge).alpha
    return float(-np.sum(np.abs(ax - ay)))


def composite_privacy(p1: float, p2: float, w: MetricWeights = MetricWeights()) -> float:
    return w.v1 * p1 + w.v2 * p2


def composite_utility(u1: float, u2: float, w: MetricWeights = MetricWeights()) -> float:
    return w.w1 * u1 + w.w2 * u2


def u2_blocked(x, y, block: int) -> float:
    """Mean of :func:`u2_map_error` over consecutive row blocks; a tail under ``m + 2`` rows joins the previous block."""
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    y = np.asarray(getattr(y, "values", y), dtype=np.float64)
    check_same_shape(x, y)
    n, m = x.shape
    starts = list(range(0, n, block))
    if len(starts) > 1 and n - starts[-1] < m + 2:
        starts.pop()
    stops = starts[1:] + [n]
    return float(np.mean([u2_map_error(x[a:b], y[a:b]) for a, b in zip(starts, stops)]))


def utility_report(x, y, w: MetricWeights = MetricWeights(), u2_block: int | None = None) -> UtilityReport:
    """U1, U2 and their composite; ``u2_block`` scores U2 blockwise (see :func:`u2_blocked`)."""
    u1 = u1_distortion(x, y)
    u2 = u2_map_error(x, y) if u2_block is None else u2_blocked(x, y, u2_block)
    return UtilityReport(u1, u2, composite_utility(u1, u2, w))


def privacy_report(probs, est_locs, true_labels, true_locs, w: MetricWeights = MetricWeights()) -> PrivacyReport:
    probs = np.asarray(probs, dtype=np.float64)
    # lowest index wins ties
    est_labels = np.argmax(probs, axis=1)
    p1 = p1_error(est_labels, true_labels)
    p2 = p2_error(est_locs, true_locs)
    return PrivacyReport(p1, p2, p1_cross_entropy(probs, true_labels), composite_privacy(p1, p2, w))


def quantize(values, bins: int = 16, lo=None, hi=None) -> np.ndarray:
    """Equal-width binning of a 1-D array into integer symbols ``0..bins-1``."""
    v = np.asarray(values, dtype=np.float64)
    lo = v.min() if lo is None else lo
    hi = v.max() if hi is None else hi
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.int64)
    idx = np.floor((v - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def joint_symbols(columns: np.ndarray, bins: int = 16) -> np.ndarray:
    """Quantize each column of ``columns`` and fuse the per-column bins into one symbol per row."""
    cols = np.asarray(columns, dtype=np.float64)
    if cols.ndim == 1:
        cols = cols[:, None]
    sym = np.zeros(cols.shape[0], dtype=np.int64)
    for j in range(cols.shape[1]):
        sym = sym * bins + quantize(cols[:, j], bins)
    return sym


def mutual_information_plugin(xs, ys) -> float:
    """Plug-in mutual information (nats) between two discrete symbol sequences."""
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise DimensionError("xs and ys must be equal-length 1-D sequences")
    n = xs.shape[0]
    if n == 0:
        raise ValueError("need at least one sample")
    _, xi = np.unique(xs, return_inverse=True)
    _, yi = np.unique(ys, return_inverse=True)
    joint = np.zeros((xi.max() + 1, yi.max() + 1))
    np.add.at(joint, (xi, yi), 1.0)
    joint /= n
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = np.sum(joint[nz] * np.log(joint[nz] / (px @ py)[nz]))
    return float(max(mi, 0.0))
