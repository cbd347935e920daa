"""Codebook privatizer driven by the exponential-utility optimal form.

Each input batch ``x`` is replaced by one batch drawn from a codebook of
``codebook_size`` candidates: ``codebook_size - 1`` batches sampled from a
Gaussian KDE of the pilot data plus one verbatim copy of ``x``. Candidate
``y`` is picked with probability proportional to ``exp(mu1 * U(x, y))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .. import rssmap
from .._validation import DimensionError, as_rng, check_matrix, check_width
from ..metrics import MetricWeights


@dataclass(frozen=True)
class ItParams:
    mu1: float = 0.5
    codebook_size: int = 51
    code_batch_size: int = 128
    bandwidth: str | float = "scott"
    weights: MetricWeights = field(default_factory=MetricWeights)
    shared_codebook: bool = False

    def __post_init__(self):
        if self.mu1 < 0:
            raise ValueError("mu1 must be >= 0")
        if self.codebook_size < 2:
            raise ValueError("codebook_size must be >= 2")


@dataclass(frozen=True)
class KdeModel:
    """Gaussian KDE with a diagonal bandwidth: one kernel per pilot row."""

    centers: np.ndarray
    bandwidth: np.ndarray

    def sample(self, count: int, seed=None) -> np.ndarray:
        rng = as_rng(seed)
        idx = rng.integers(0, self.centers.shape[0], size=count)
        return self.centers[idx] + rng.standard_normal((count, self.centers.shape[1])) * self.bandwidth


@dataclass
class Codebook:
    codes: np.ndarray  # (N_s, batch, m)
    identity_slot: int

    @property
    def size(self) -> int:
        return self.codes.shape[0]


def fit_kde(pilot, rule: str | float = "scott") -> KdeModel:
    """Diagonal-bandwidth KDE.

    ``rule="scott"`` uses ``h_j = n^(-1/(m+4)) * std_j``; a float is used as
    the factor in place of ``n^(-1/(m+4))``. Zero-variance features get
    bandwidth equal to the factor so the kernel stays proper.
    """
    x = check_matrix(getattr(pilot, "values", pilot), "pilot")
    n, m = x.shape
    if rule == "scott":
        factor = n ** (-1.0 / (m + 4))
    elif isinstance(rule, (int, float)) and rule >= 0:
        factor = float(rule)
    else:
        raise ValueError(f"unknown bandwidth rule {rule!r}")
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return KdeModel(x.copy(), factor * std)


def build_codebook(kde: KdeModel, x_batch, p: ItParams, seed=None, shared=None) -> Codebook:
    """``N_s - 1`` KDE batches shaped like ``x_batch`` plus ``x_batch`` itself in the last slot.

    ``shared`` optionally supplies pre-drawn codes (``N_s - 1`` x rows x m);
    they are truncated to the batch length.
    """
    x = check_matrix(getattr(x_batch, "values", x_batch), "x_batch")
    b = x.shape[0]
    if shared is not None:
        sampled = shared[:, :b, :]
    else:
        sampled = kde.sample((p.codebook_size - 1) * b, seed).reshape(p.codebook_size - 1, b, x.shape[1])
    codes = np.concatenate([sampled, x[None]], axis=0)
    return Codebook(codes, p.codebook_size - 1)


def _alpha(x: np.ndarray) -> np.ndarray:
    return rssmap.fit(x).alpha


def code_utilities(x_batch, codebook: Codebook, w: MetricWeights = MetricWeights()) -> np.ndarray:
    """Composite utility ``w1 U1 + w2 U2`` of every code against ``x_batch``."""
    x = check_matrix(getattr(x_batch, "values", x_batch))
    if x.shape[0] <= x.shape[1]:
        raise DimensionError(f"code batch of {x.shape[0]} rows too small for the RSS regression (m={x.shape[1]})")
    diff = codebook.codes - x[None]
    u1 = -np.mean(np.sqrt(np.sum(diff**2, axis=2)), axis=1)
    if w.w2:
        ax = _alpha(x)
        u2 = np.array([-np.sum(np.abs(ax - _alpha(c))) for c in codebook.codes])
        u2[codebook.identity_slot] = 0.0
    else:
        u2 = np.zeros(codebook.size)
    return w.w1 * u1 + w.w2 * u2


def weights_from_utilities(utilities, mu1: float) -> np.ndarray:
    """Normalized ``exp(mu1 * U)`` with a max shift in the exponent."""
    u = np.asarray(utilities, dtype=np.float64)
    z = mu1 * u
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def code_weights(x_batch, codebook: Codebook, p: ItParams) -> np.ndarray:
    return weights_from_utilities(code_utilities(x_batch, codebook, p.weights), p.mu1)


def expected_utility(utilities, mu1: float) -> float:
    """Exact expected utility of the selected code under the selection distribution."""
    u = np.asarray(utilities, dtype=np.float64)
    return float(np.dot(weights_from_utilities(u, mu1), u))


def batch_bounds(n: int, batch_size: int, min_rows: int) -> list[tuple[int, int]]:
    """Contiguous ``[start, stop)`` blocks of ``batch_size``; a tail shorter than ``min_rows`` joins the previous block."""
    if n < min_rows:
        raise DimensionError(f"need at least {min_rows} rows, got {n}")
    bounds = [(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] < min_rows:
        s, _ = bounds[-2]
        bounds[-2:] = [(s, n)]
    return bounds


def _seed_int(seed) -> int | None:
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(0, 2**63 - 1))
    return seed


def it_obfuscate(x, p: ItParams, kde: KdeModel, seed=None, return_choices=False):
    """Replace each block of ``x`` by a code drawn from its codebook.

    Every block gets its own child seed, so the result does not depend on
    evaluation order.
    """
    x = check_matrix(getattr(x, "values", x))
    m = x.shape[1]
    if kde.centers.shape[1] != m:
        raise DimensionError(f"KDE fit on {kde.centers.shape[1]} features, data has {m}")
    if p.code_batch_size <= m + 1:
        raise ValueError(f"code_batch_size must exceed m + 1 = {m + 1}")
    bounds = batch_bounds(x.shape[0], p.code_batch_size, m + 2)
    root = np.random.SeedSequence(_seed_int(seed))
    children = root.spawn(len(bounds) + 1)
    shared = None
    if p.shared_codebook:
        longest = max(b - a for a, b in bounds)
        shared = kde.sample((p.codebook_size - 1) * longest, children[-1]).reshape(p.codebook_size - 1, longest, m)
    out = np.empty_like(x)
    choices = []
    for (a, b), child in zip(bounds, children):
        rng = np.random.default_rng(child)
        book = build_codebook(kde, x[a:b], p, rng, shared)
        probs = code_weights(x[a:b], book, p)
        pick = int(rng.choice(book.size, p=probs))
        out[a:b] = book.codes[pick]
        choices.append(pick)
    if return_choices:
        return out, choices
    return out


class ItPrivatizer(TransformerMixin, BaseEstimator):
    """Sklearn wrapper; ``fit`` learns the KDE from pilot rows, ``transform`` obfuscates."""

    def __init__(self, mu1=0.5, codebook_size=51, code_batch_size=128, bandwidth="scott",
                 w1=1.0, w2=1.0, shared_codebook=False, random_state=None):
        self.mu1 = mu1
        self.codebook_size = codebook_size
        self.code_batch_size = code_batch_size
        self.bandwidth = bandwidth
        self.w1 = w1
        self.w2 = w2
        self.shared_codebook = shared_codebook
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_matrix(X)
        self.params_ = ItParams(
            float(self.mu1), int(self.codebook_size), int(self.code_batch_size), self.bandwidth,
            MetricWeights(w1=self.w1, w2=self.w2), bool(self.shared_codebook),
        )
        self.kde_ = fit_kde(X, self.bandwidth)
        self.n_features_in_ = X.shape[1]
        self._rng = as_rng(self.random_state)
        return self

    def transform(self, X):
        check_is_fitted(self, "kde_")
        X = check_matrix(X)
        check_width(X, self.n_features_in_)
        return it_obfuscate(X, self.params_, self.kde_, self._rng)
