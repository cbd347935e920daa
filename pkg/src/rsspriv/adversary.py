"""Inference adversary: predicts user ID and true location from one obfuscated row."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DimensionError, as_rng, check_labels, check_matrix, check_width
from .metrics import MetricWeights, PrivacyReport, distance_grad, privacy_report
from .nncore import AdamState, Mlp, TrainingError, adam_step, softmax, softmax_cross_entropy

VARIANTS = ("baseline", "unobfuscated", "aggregate", "alternative")
ALTERNATIVE_WEIGHTS = ((0.8, 0.2), (0.2, 0.8))


@dataclass(frozen=True)
class AdversaryEstimate:
    user_probs: np.ndarray
    locations: np.ndarray
    labels: np.ndarray


def head_loss(out: np.ndarray, labels: np.ndarray, locs: np.ndarray, k: int, v1: float, v2: float):
    """``v1 * CE + v2 * mean distance`` on a raw ``n x (k+2)`` output and its gradient."""
    ce, d_logits = softmax_cross_entropy(out[:, :k], labels)
    est = out[:, k : k + 2]
    dist = float(np.mean(np.sqrt(np.sum((est - locs) ** 2, axis=1))))
    grad = np.empty_like(out)
    grad[:, :k] = v1 * d_logits
    grad[:, k : k + 2] = v2 * distance_grad(est, locs)
    return v1 * ce + v2 * dist, grad


class InferenceAdversary(ClassifierMixin, BaseEstimator):
    """MLP adversary with a softmax user head and a linear 2-D location head.

    Trained with Adam on ``v1 * P1ce + v2 * P2``, one full-gradient step per
    block of ``batch_size`` rows, until the epoch loss fails to improve by
    ``tol`` over ``patience`` epochs or ``max_epochs`` is reached.

    ``fit(X, y, locations)``: ``X`` obfuscated features, ``y`` true user ids,
    ``locations`` true normalized (lat, lon).
    """

    def __init__(
        self,
        n_users=None,
        hidden=(256, 256),
        v1=1.0,
        v2=1.0,
        lr=0.001,
        batch_size=1024,
        max_epochs=500,
        tol=1e-4,
        patience=10,
        random_state=0,
    ):
        self.n_users = n_users
        self.hidden = hidden
        self.v1 = v1
        self.v2 = v2
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.tol = tol
        self.patience = patience
        self.random_state = random_state

    # -- training -------------------------------------------------------
    def init_network(self, n_features: int, n_users: int, locations=None) -> "InferenceAdversary":
        """Fresh network and optimizer.

        With ``v2 == 0`` the location head gets no gradient, so it is pinned to
        the mean of ``locations`` (when given) instead of a random projection.
        """
        if n_users < 2:
            raise ValueError("the adversary needs at least 2 users")
        self.k_ = int(n_users)
        self.n_features_in_ = int(n_features)
        self.classes_ = np.arange(self.k_)
        self._rng = as_rng(self.random_state)
        self.net_ = Mlp([n_features, *self.hidden, self.k_ + 2], seed=self._rng)
        self.opt_ = AdamState(lr=self.lr)
        self.loss_history_ = []
        if self.v2 == 0 and locations is not None:
            self.net_.weights[-1][:, self.k_ :] = 0.0
            self.net_.biases[-1][self.k_ :] = np.mean(locations, axis=0)
        return self

    def _check_xy(self, X, y, locations):
        X = check_matrix(X)
        y = check_labels(y, X.shape[0], "y")
        locs = check_matrix(locations, "locations")
        if locs.shape != (X.shape[0], 2):
            raise DimensionError(f"locations must be n x 2, got {locs.shape}")
        return X, y, locs

    def train_epoch(self, X, y, locs) -> float:
        """One shuffled pass of Adam steps; returns the row-weighted mean batch loss."""
        n = X.shape[0]
        order = self._rng.permutation(n)
        total = 0.0
        for start in range(0, n, self.batch_size):
            idx = order[start : start + self.batch_size]
            out = self.net_.forward(X[idx])
            loss, dout = head_loss(out, y[idx], locs[idx], self.k_, self.v1, self.v2)
            if not np.isfinite(loss):
                raise TrainingError(f"adversary loss became {loss} at epoch {len(self.loss_history_)}")
            grads, _ = self.net_.backward(dout)
            adam_step(self.net_, grads, self.opt_)
            total += loss * len(idx)
        epoch_loss = total / n
        self.loss_history_.append(epoch_loss)
        return epoch_loss

    def fit(self, X, y, locations):
        X, y, locs = self._check_xy(X, y, locations)
        if X.shape[0] == 0:
            raise ValueError("empty training set")
        k = self.n_users if self.n_users is not None else int(y.max()) + 1
        if y.max() >= k:
            raise ValueError(f"label {y.max()} outside n_users={k}")
        self.init_network(X.shape[1], k, locs)
        best = np.inf
        best_at = 0
        for epoch in range(self.max_epochs):
            loss = self.train_epoch(X, y, locs)
            if loss < best - self.tol:
                best, best_at = loss, epoch
            elif epoch - best_at >= self.patience:
                break
        self.n_epochs_ = len(self.loss_history_)
        return self

    # -- inference ------------------------------------------------------
    def _raw(self, X, cache=False):
        check_is_fitted(self, "net_")
        X = check_matrix(X)
        check_width(X, self.n_features_in_)
        return self.net_.forward(X, cache=cache)

    def loss(self, X, y, locations) -> float:
        X, y, locs = self._check_xy(X, y, locations)
        return head_loss(self._raw(X), y, locs, self.k_, self.v1, self.v2)[0]

    def loss_and_input_grad(self, X, y, locs) -> tuple[float, np.ndarray]:
        """Adversary loss on ``X`` and its gradient w.r.t. ``X``; parameters are not touched."""
        out = self._raw(X, cache=True)
        loss, dout = head_loss(out, y, locs, self.k_, self.v1, self.v2)
        _, dx = self.net_.backward(dout)
        return loss, dx

    def estimate(self, X) -> AdversaryEstimate:
        out = self._raw(X)
        probs = softmax(out[:, : self.k_])
        return AdversaryEstimate(probs, out[:, self.k_ : self.k_ + 2].copy(), np.argmax(probs, axis=1))

    def predict_proba(self, X):
        return self.estimate(X).user_probs

    def predict(self, X):
        return self.estimate(X).labels

    def predict_location(self, X):
        return self.estimate(X).locations

    def evaluate(self, X, y, locations, weights: MetricWeights = MetricWeights()) -> PrivacyReport:
        X, y, locs = self._check_xy(X, y, locations)
        est = self.estimate(X)
        return privacy_report(est.user_probs, est.locations, y, locs, weights)


def train_adversary(obf_train, true_labels, true_locs, weights: MetricWeights = MetricWeights(), schedule=None, seed=0, n_users=None):
    """Functional form of ``InferenceAdversary(...).fit``; ``schedule`` holds optional training kwargs."""
    kw = dict(schedule or {})
    adv = InferenceAdversary(n_users=n_users, v1=weights.v1, v2=weights.v2, random_state=seed, **kw)
    return adv.fit(getattr(obf_train, "values", obf_train), true_labels, true_locs)


def estimate(model: InferenceAdversary, obf) -> AdversaryEstimate:
    return model.estimate(getattr(obf, "values", obf))


def evaluate(model: InferenceAdversary, obf_test, true_labels, true_locs, weights: MetricWeights = MetricWeights()) -> PrivacyReport:
    return model.evaluate(getattr(obf_test, "values", obf_test), true_labels, true_locs, weights)


def make_variant(
    kind: str,
    *,
    raw_train=None,
    obf_train=None,
    pooled_train=(),
    true_labels=None,
    true_locs=None,
    alt_weights=(0.8, 0.2),
    schedule=None,
    seed=0,
    n_users=None,
) -> InferenceAdversary:
    """Train one of the common-adversary variants.

    ``baseline`` uses the scoring privatizer's own obfuscated training rows,
    ``unobfuscated`` the raw rows, ``aggregate`` the row-wise concatenation of
    ``pooled_train`` (one obfuscated copy per privatizer, each aligned with
    ``true_labels``), ``alternative`` the own rows with loss weights
    ``alt_weights``.
    """
    if kind not in VARIANTS:
        raise ValueError(f"unknown adversary variant {kind!r}; choose from {VARIANTS}")
    weights = MetricWeights()
    labels, locs = true_labels, true_locs
    if kind == "baseline":
        data = obf_train
    elif kind == "unobfuscated":
        data = raw_train
    elif kind == "alternative":
        data = obf_train
        weights = MetricWeights(v1=alt_weights[0], v2=alt_weights[1])
    else:
        pooled = []
        for p in pooled_train:
            p = np.asarray(getattr(p, "values", p))
            # identical blocks add no information; pooling them only reweights epochs
            if not any(np.array_equal(p, q) for q in pooled):
                pooled.append(p)
        if not pooled:
            raise ValueError("aggregate adversary needs at least one obfuscated block")
        data = np.vstack(pooled)
        labels = np.tile(np.asarray(true_labels), len(pooled))
        locs = np.vstack([np.asarray(true_locs)] * len(pooled))
    if data is None:
        raise ValueError(f"{kind} adversary is missing its training data")
    return train_adversary(data, labels, locs, weights, schedule, seed, n_users)
