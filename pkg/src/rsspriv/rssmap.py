"""Linear RSS signal-map model fit by (ridge) least squares.

The model predicts column 2 (RSS) from an intercept plus every other
feature; ``alpha = [a0, a1, ..., a_{m-1}]`` follows the feature order with the
RSS column removed.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DimensionError, check_matrix
from .dataset import RSS, NormStats

DIFF_RIDGE = 1e-6
FALLBACK_RIDGE = 1e-6
_RCOND = 1e-10


class RankDeficiencyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RssModel:
    alpha: np.ndarray
    ridge: float = 0.0
    fallback: bool = False

    @property
    def m(self) -> int:
        return self.alpha.shape[0]

    def to_json(self, feature_names=None) -> str:
        names = list(feature_names) if feature_names is not None else None
        if names is not None:
            names = ["intercept"] + [nm for j, nm in enumerate(names) if j != RSS]
        return json.dumps({"alpha": self.alpha.tolist(), "features": names})

    @classmethod
    def from_json(cls, text: str) -> "RssModel":
        return cls(np.asarray(json.loads(text)["alpha"], dtype=np.float64))


def design(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split ``x`` into the intercept-augmented design ``Z`` and the RSS target ``t``."""
    z = np.column_stack([np.ones(x.shape[0]), np.delete(x, RSS, axis=1)])
    return z, x[:, RSS]


def _solve(z, t, ridge):
    a = z.T @ z
    if ridge:
        a = a + ridge * np.eye(a.shape[0])
    return np.linalg.solve(a, z.T @ t), a


def fit(f, ridge: float = 0.0) -> RssModel:
    """Least-squares fit of the signal map.

    ``ridge = 0`` is the plain normal-equation solution; if the design is
    numerically rank deficient it is retried with ``FALLBACK_RIDGE`` and the
    result carries ``fallback=True``.
    """
    x = check_matrix(getattr(f, "values", f), "features")
    n, m = x.shape
    if m < 3:
        raise DimensionError("need at least lat, lon and rss columns")
    if n <= m:
        raise DimensionError(f"regression needs n > m, got n={n}, m={m}")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    z, t = design(x)
    if ridge == 0.0:
        s = np.linalg.svd(z, compute_uv=False)
        if s[-1] <= _RCOND * s[0]:
            warnings.warn("rank-deficient RSS design; retrying with ridge", RankDeficiencyWarning, stacklevel=2)
            alpha, _ = _solve(z, t, FALLBACK_RIDGE)
            return RssModel(alpha, FALLBACK_RIDGE, True)
    alpha, _ = _solve(z, t, ridge)
    return RssModel(alpha, ridge, False)


def predict(model: RssModel, f) -> np.ndarray:
    x = check_matrix(getattr(f, "values", f), "features")
    if x.shape[1] != model.m:
        raise DimensionError(f"model expects {model.m} features, got {x.shape[1]}")
    z, _ = design(x)
    return z @ model.alpha


def rmse(model: RssModel, f, stats: NormStats | None = None) -> float:
    """Root-mean-square RSS prediction error, in dBm when ``stats`` is given."""
    x = check_matrix(getattr(f, "values", f), "features")
    err = predict(model, x) - x[:, RSS]
    scale = 1.0 if stats is None else float(stats.std[RSS])
    return float(np.sqrt(np.mean(err**2)) * scale)


def alpha_vjp(x: np.ndarray, upstream: np.ndarray, ridge: float = DIFF_RIDGE) -> tuple[np.ndarray, np.ndarray]:
    """Ridge fit plus the vector-Jacobian product of ``alpha`` w.r.t. ``x``.

    Implicit differentiation of ``(Z'Z + ridge I) alpha = Z't``: with
    ``v = (Z'Z + ridge I)^-1 g`` and residual ``r = t - Z alpha``,
    ``dL/dZ = r v' - (Z v) alpha'`` and ``dL/dt = Z v``.

    Returns ``(alpha, dL/dx)``.
    """
    z, t = design(x)
    alpha, a = _solve(z, t, ridge)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != alpha.shape:
        raise DimensionError(f"upstream gradient shape {g.shape} != alpha shape {alpha.shape}")
    v = np.linalg.solve(a, g)
    r = t - z @ alpha
    zv = z @ v
    dz = np.outer(r, v) - np.outer(zv, alpha)
    dx = np.empty_like(x)
    dx[:, RSS] = zv
    dx[:, np.arange(x.shape[1]) != RSS] = dz[:, 1:]
    return alpha, dx


def fit_differentiable(f, upstream_grad, ridge: float = DIFF_RIDGE) -> np.ndarray:
    """Gradient of ``upstream_grad . alpha(f)`` with respect to every entry of ``f``."""
    x = check_matrix(getattr(f, "values", f), "features")
    return alpha_vjp(x, upstream_grad, ridge)[1]


def u2_value_and_grad(x: np.ndarray, y: np.ndarray, ridge: float = DIFF_RIDGE) -> tuple[float, np.ndarray]:
    """``U2 = -||alpha_x - alpha_y||_1`` and its gradient w.r.t. ``y`` (sign(0) taken as 0)."""
    alpha_x, _ = _solve(*design(x), ridge)
    z, t = design(y)
    alpha_y, _ = _solve(z, t, ridge)
    diff = alpha_x - alpha_y
    value = -float(np.sum(np.abs(diff)))
    # dU2/dalpha_y = sign(alpha_x - alpha_y)
    _, dy = alpha_vjp(y, np.sign(diff), ridge)
    return value, dy


class RssRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper: ``fit(X)`` learns the map from the feature block itself.

    ``X`` is a full feature block including the RSS column; ``predict`` returns
    RSS for each row. ``y`` is accepted for API compatibility and, when given,
    replaces the RSS column as the regression target.
    """

    def __init__(self, ridge: float = 0.0):
        self.ridge = ridge

    def fit(self, X, y=None):
        X = check_matrix(X)
        if y is not None:
            X = X.copy()
            X[:, RSS] = np.asarray(y, dtype=np.float64)
        self.model_ = fit(X, self.ridge)
        self.alpha_ = self.model_.alpha
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return predict(self.model_, X)
