"""Context-free privatizers: i.i.d. Gaussian noise and local DP after L2 clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import as_rng, check_matrix, check_width

MECHANISMS = ("gaussian-classic", "gaussian-analytic", "truncated-laplacian")
DEFAULT_DELTA = 1e-5


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseParams:
    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class LdpParams:
    epsilon: float
    delta: float = DEFAULT_DELTA
    clip_half: float = 1.0
    mechanism: str = "gaussian-analytic"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not 0 < self.delta < 1:
            raise ValueError("delta must be in (0, 1)")
        if not self.clip_half > 0:
            raise ValueError("clip_half must be > 0")
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}; choose from {MECHANISMS}")
        if self.mechanism == "truncated-laplacian" and self.delta >= 0.5:
            raise ValueError("truncated Laplacian needs delta < 1/2")

    @property
    def sensitivity(self) -> float:
        return 2.0 * self.clip_half


def noise_obfuscate(x, p: NoiseParams | float, seed=None) -> np.ndarray:
    """``x`` plus i.i.d. ``N(0, sigma^2)`` noise on every entry."""
    sigma = p.sigma if isinstance(p, NoiseParams) else NoiseParams(float(p)).sigma
    x = check_matrix(getattr(x, "values", x))
    noise = as_rng(seed).standard_normal(x.shape)
    return x + sigma * noise


def row_norms(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.asarray(x, dtype=np.float64) ** 2, axis=1))


def choose_clip(pilot, clip_fraction: float = 0.05) -> float:
    """Clip radius such that about ``clip_fraction`` of pilot rows get clipped.

    Nearest-rank ``(1 - clip_fraction)`` quantile of the row L2 norms.
    """
    if not 0 <= clip_fraction < 1:
        raise ValueError("clip_fraction must be in [0, 1)")
    norms = row_norms(check_matrix(getattr(pilot, "values", pilot), "pilot"))
    return float(np.quantile(norms, 1.0 - clip_fraction, method="inverted_cdf"))


def clip(x, clip_half: float) -> np.ndarray:
    """Rescale each row to L2 norm ``min(clip_half, ||row||)``; zero rows pass through."""
    if not clip_half > 0:
        raise ValueError("clip_half must be > 0")
    x = check_matrix(getattr(x, "values", x))
    norms = row_norms(x)[:, None]
    scale = np.where(norms > clip_half, clip_half / np.where(norms > 0, norms, 1.0), 1.0)
    return x * scale


def gaussian_mech_variance(epsilon: float, delta: float, sensitivity: float) -> float:
    """Classic Gaussian-mechanism variance ``(D^2 / eps^2) * 2 ln(1.25 / delta)``."""
    if not epsilon > 0 or not 0 < delta < 1:
        raise ValueError("need epsilon > 0 and delta in (0, 1)")
    return sensitivity**2 / epsilon**2 * 2.0 * math.log(1.25 / delta)


def analytic_gap(sigma: float, epsilon: float, sensitivity: float) -> float:
    """``Phi(D/2s - eps s/D) - e^eps Phi(-D/2s - eps s/D)``: the delta achieved by noise std ``s``."""
    a = sensitivity / (2.0 * sigma)
    b = epsilon * sigma / sensitivity
    return float(ndtr(a - b) - np.exp(epsilon + log_ndtr(-a - b)))


def gaussian_mech_sigma_analytic(epsilon, delta, sensitivity, rel_tol=1e-9, max_iter=200) -> float:
    """Smallest noise std meeting (epsilon, delta)-DP exactly, by bisection.

    The returned value is the upper end of the final bracket, so it always
    satisfies the constraint.
    """
    if not epsilon > 0 or not 0 < delta < 1:
        raise ValueError("need epsilon > 0 and delta in (0, 1)")
    if sensitivity == 0:
        return 0.0
    hi = sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon
    for _ in range(max_iter):
        if analytic_gap(hi, epsilon, sensitivity) <= delta:
            break
        hi *= 2.0
    else:
        raise CalibrationError("could not bracket the analytic Gaussian sigma from above")
    lo = hi / 2.0
    for _ in range(max_iter):
        if analytic_gap(lo, epsilon, sensitivity) > delta:
            break
        hi, lo = lo, lo / 2.0
    else:
        raise CalibrationError("could not bracket the analytic Gaussian sigma from below")
    for _ in range(max_iter):
        if hi - lo <= rel_tol * hi:
            return hi
        mid = 0.5 * (lo + hi)
        if analytic_gap(mid, epsilon, sensitivity) <= delta:
            hi = mid
        else:
            lo = mid
    raise CalibrationError(f"analytic Gaussian bisection did not converge in {max_iter} iterations")


def gaussian_mech_variance_analytic(epsilon: float, delta: float, sensitivity: float) -> float:
    return gaussian_mech_sigma_analytic(epsilon, delta, sensitivity) ** 2


def trunclap_params(epsilon: float, delta: float, sensitivity: float) -> tuple[float, float, float]:
    """Scale ``lambda``, half-width ``A`` and density height ``B`` of the truncated Laplacian."""
    if not epsilon > 0 or not 0 < delta < 0.5:
        raise ValueError("need epsilon > 0 and delta in (0, 1/2)")
    if not sensitivity > 0:
        raise ValueError("sensitivity must be > 0")
    lam = sensitivity / epsilon
    a = lam * math.log1p(math.expm1(epsilon) / (2.0 * delta))
    b = 1.0 / (2.0 * lam * -math.expm1(-a / lam))
    return lam, a, b


def trunclap_pdf(x, epsilon, delta, sensitivity) -> np.ndarray:
    lam, a, b = trunclap_params(epsilon, delta, sensitivity)
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) <= a, b * np.exp(-np.abs(x) / lam), 0.0)


def trunclap_sample(epsilon, delta, sensitivity, seed=None, count: int | tuple = 1) -> np.ndarray:
    """Inverse-CDF draws from the truncated Laplacian; every sample lies in ``[-A, A]``."""
    lam, a, _ = trunclap_params(epsilon, delta, sensitivity)
    rng = as_rng(seed)
    u = rng.random(count)
    sign = np.where(rng.random(count) < 0.5, -1.0, 1.0)
    # |X| is exponential(lam) truncated to [0, A]
    mass = -math.expm1(-a / lam)
    mag = np.minimum(-lam * np.log1p(-u * mass), a)
    return sign * mag


def mechanism_noise(p: LdpParams, shape, seed=None) -> np.ndarray:
    rng = as_rng(seed)
    sens = p.sensitivity
    if p.mechanism == "truncated-laplacian":
        return trunclap_sample(p.epsilon, p.delta, sens, rng, shape)
    if p.mechanism == "gaussian-analytic":
        std = gaussian_mech_sigma_analytic(p.epsilon, p.delta, sens)
    else:
        std = math.sqrt(gaussian_mech_variance(p.epsilon, p.delta, sens))
    return std * rng.standard_normal(shape)


def noise_std(p: LdpParams) -> float:
    """Per-entry noise standard deviation of the configured mechanism."""
    sens = p.sensitivity
    if p.mechanism == "gaussian-analytic":
        return gaussian_mech_sigma_analytic(p.epsilon, p.delta, sens)
    if p.mechanism == "gaussian-classic":
        return math.sqrt(gaussian_mech_variance(p.epsilon, p.delta, sens))
    lam, a, _ = trunclap_params(p.epsilon, p.delta, sens)
    # second moment of the truncated exponential magnitude
    r = a / lam
    m2 = 2 * lam**2 * (1 - math.exp(-r) * (1 + r + r * r / 2)) / -math.expm1(-r)
    return math.sqrt(m2)


def ldp_obfuscate(x, p: LdpParams, seed=None) -> np.ndarray:
    """Clip every row to ``clip_half`` then add mechanism noise to every entry."""
    clipped = clip(x, p.clip_half)
    return clipped + mechanism_noise(p, clipped.shape, seed)


class NoisePrivatizer(TransformerMixin, BaseEstimator):
    """Adds ``N(0, sigma^2)`` to each normalized feature.

    Successive ``transform`` calls draw fresh noise from a generator seeded
    by ``random_state`` at ``fit`` time.
    """

    def __init__(self, sigma=0.1, random_state=None):
        self.sigma = sigma
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_matrix(X)
        NoiseParams(self.sigma)
        self.n_features_in_ = X.shape[1]
        self._rng = as_rng(self.random_state)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_matrix(X)
        check_width(X, self.n_features_in_)
        return noise_obfuscate(X, self.sigma, self._rng)


class LdpPrivatizer(TransformerMixin, BaseEstimator):
    """Local DP privatizer: row clipping followed by per-entry mechanism noise.

    Parameters
    ----------
    epsilon, delta : float
        Privacy parameters; the whole row is one release with L2 sensitivity
        ``2 * clip_half``.
    clip_half : float or None
        Clip radius. ``None`` picks it at ``fit`` so that ``clip_fraction`` of
        the training rows get clipped.
    mechanism : {"gaussian-analytic", "gaussian-classic", "truncated-laplacian"}
    """

    def __init__(self, epsilon=1.0, delta=DEFAULT_DELTA, clip_half=None, clip_fraction=0.05,
                 mechanism="gaussian-analytic", random_state=None):
        self.epsilon = epsilon
        self.delta = delta
        self.clip_half = clip_half
        self.clip_fraction = clip_fraction
        self.mechanism = mechanism
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_matrix(X)
        clip_half = self.clip_half if self.clip_half is not None else choose_clip(X, self.clip_fraction)
        self.params_ = LdpParams(float(self.epsilon), float(self.delta), float(clip_half), self.mechanism)
        self.clip_half_ = self.params_.clip_half
        self.noise_std_ = noise_std(self.params_)
        self.n_features_in_ = X.shape[1]
        self._rng = as_rng(self.random_state)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = check_matrix(X)
        check_width(X, self.n_features_in_)
        return ldp_obfuscate(X, self.params_, self._rng)
