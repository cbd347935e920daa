"""Generative adversarial privatizer trained in a minimax loop.

The privatizer network maps each normalized row ``x`` to ``y``; it minimizes
``Lp = -rho * U(x, y) - (1 - rho) * La`` while an in-loop adversary minimizes
``La`` on the privatizer's output. The two alternate every ``k_epochs``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .. import rssmap
from .._validation import DimensionError, check_labels, check_matrix, check_width
from ..adversary import InferenceAdversary
from ..metrics import MetricWeights, u1_distortion, u1_grad
from ..nncore import AdamState, Mlp, TrainingError, adam_step
from .infotheory import batch_bounds

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GapParams:
    rho: float = 0.5
    weights: MetricWeights = field(default_factory=MetricWeights)
    k_epochs: int = 5
    max_rounds: int = 200
    tol: float = 1e-4
    window: int = 5
    seed: int | None = 0
    hidden: tuple[int, ...] = (256, 256)
    adversary_hidden: tuple[int, ...] = (256, 256)
    lr: float = 0.001
    batch_size: int = 1024
    residual: bool = False
    init: str = "he"
    la_cap: float | str | None = None
    adversary_epochs: int | None = None
    privatizer_epochs: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")
        if self.k_epochs < 1 or self.max_rounds < 1:
            raise ValueError("k_epochs and max_rounds must be >= 1")
        if isinstance(self.la_cap, str) and self.la_cap != "prior":
            raise ValueError(f"la_cap must be a number, 'prior' or None, got {self.la_cap!r}")
        for name in ("adversary_epochs", "privatizer_epochs"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1 when set")


@dataclass
class GapModel:
    privatizer: Mlp
    adversary: InferenceAdversary
    params: GapParams
    history: list[dict] = field(default_factory=list)

    def obfuscate(self, x) -> np.ndarray:
        return gap_obfuscate(self, x)


def _forward(net: Mlp, x: np.ndarray, residual: bool, cache=True) -> np.ndarray:
    out = net.forward(x, cache=cache)
    return x + out if residual else out


def prior_adversary_loss(labels, locs, w: MetricWeights) -> float:
    """Adversary loss of the best input-free guess: empirical user shares and the mean location."""
    share = np.bincount(labels) / len(labels)
    share = share[share > 0]
    entropy = float(-np.sum(share * np.log(share)))
    spread = float(np.mean(np.sqrt(np.sum((locs - locs.mean(axis=0)) ** 2, axis=1))))
    return w.v1 * entropy + w.v2 * spread


def gap_privatizer_loss(x, y, adversary: InferenceAdversary, labels, locs, p: GapParams, la_cap=None):
    """Privatizer loss and its gradient with respect to ``y``.

    ``U`` combines the distortion term and the signal-map term (differentiated
    through the ridge-regularized normal equations); ``La`` is evaluated by the
    fixed ``adversary``. ``la_cap`` (default ``p.la_cap`` when numeric) clips
    ``La`` from above with zero gradient. Returns ``(Lp, dLp/dy, parts)``.
    """
    if la_cap is None and not isinstance(p.la_cap, str):
        la_cap = p.la_cap
    w = p.weights
    grad_u = np.zeros_like(y)
    u1 = u2 = 0.0
    if w.w1:
        u1 = u1_distortion(x, y)
        grad_u += w.w1 * u1_grad(x, y)
    if w.w2:
        u2, g2 = rssmap.u2_value_and_grad(x, y)
        grad_u += w.w2 * g2
    util = w.w1 * u1 + w.w2 * u2
    la, grad_la = adversary.loss_and_input_grad(y, labels, locs)
    if la_cap is not None and la > la_cap:
        la, grad_la = la_cap, np.zeros_like(grad_la)
    loss = -p.rho * util - (1.0 - p.rho) * la
    grad = -p.rho * grad_u - (1.0 - p.rho) * grad_la
    return loss, grad, {"u1": u1, "u2": u2, "u": util, "la": la}


def _converged(history: list[dict], window: int, tol: float) -> bool:
    if len(history) < window + 1:
        return False
    recent = history[-(window + 1):]
    for key in ("la", "lp"):
        vals = [h[key] for h in recent]
        if max(vals) - min(vals) >= tol:
            return False
    return True


def train_gap(x, labels, p: GapParams = GapParams(), locations=None, n_users=None) -> GapModel:
    """Alternate adversary and privatizer descent until both losses settle or ``max_rounds``.

    ``x`` is the normalized training block; ``locations`` defaults to its first
    two columns.
    """
    x = check_matrix(getattr(x, "values", x))
    labels = check_labels(labels, x.shape[0])
    locs = x[:, :2] if locations is None else check_matrix(locations, "locations")
    n, m = x.shape
    k = n_users if n_users is not None else int(labels.max()) + 1
    if k < 2:
        raise ValueError("GAP training needs at least 2 users")
    bounds = batch_bounds(n, p.batch_size, m + 2)

    priv_seed, adv_seed, shuffle_seed = np.random.SeedSequence(p.seed).spawn(3)
    priv = Mlp([m, *p.hidden, m], seed=np.random.default_rng(priv_seed), init=p.init)
    adv = InferenceAdversary(n_users=k, hidden=p.adversary_hidden, v1=p.weights.v1, v2=p.weights.v2,
                             lr=p.lr, batch_size=p.batch_size, random_state=np.random.default_rng(adv_seed))
    adv.init_network(m, k, locs)
    opt = AdamState(lr=p.lr)
    rng = np.random.default_rng(shuffle_seed)
    model = GapModel(priv, adv, p)
    # with a distance term in La the loss is unbounded below once (1 - rho) v2 > rho w1; the cap bounds it
    cap = prior_adversary_loss(labels, locs, p.weights) if p.la_cap == "prior" else p.la_cap

    for rnd in range(p.max_rounds):
        y_all = _forward(priv, x, p.residual, cache=False)
        for _ in range(p.adversary_epochs or p.k_epochs):
            la = adv.train_epoch(y_all, labels, locs)
        lp_sum = 0.0
        for _ in range(p.privatizer_epochs or p.k_epochs):
            # shuffle whole rows, keep block sizes large enough for the regression
            order = rng.permutation(n)
            lp_sum = 0.0
            parts_sum = {"u1": 0.0, "u2": 0.0, "u": 0.0}
            for a, b in bounds:
                idx = order[a:b]
                xb = x[idx]
                yb = _forward(priv, xb, p.residual)
                lp, gy, parts = gap_privatizer_loss(xb, yb, adv, labels[idx], locs[idx], p, cap)
                if not np.isfinite(lp):
                    raise TrainingError(f"GAP privatizer loss became {lp} in round {rnd}")
                grads, _ = priv.backward(gy)
                adam_step(priv, grads, opt)
                lp_sum += lp * (b - a)
                for key in parts_sum:
                    parts_sum[key] += parts[key] * (b - a)
        model.history.append({"round": rnd, "la": la, "lp": lp_sum / n, **{kk: v / n for kk, v in parts_sum.items()}})
        if _converged(model.history, p.window, p.tol):
            log.debug("GAP converged after %d rounds", rnd + 1)
            break
    return model


def gap_obfuscate(model: GapModel, x) -> np.ndarray:
    x = check_matrix(getattr(x, "values", x))
    if x.shape[1] != model.privatizer.layer_dims[0]:
        raise DimensionError(f"privatizer expects {model.privatizer.layer_dims[0]} features, got {x.shape[1]}")
    return _forward(model.privatizer, x, model.params.residual, cache=False)


def write_history_csv(model: GapModel, path) -> None:
    import csv

    keys = ["round", "la", "lp", "u1", "u2", "u"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for h in model.history:
            w.writerow([h[kk] if kk == "round" else repr(float(h[kk])) for kk in keys])


class GapPrivatizer(TransformerMixin, BaseEstimator):
    """Sklearn wrapper around :func:`train_gap` / :func:`gap_obfuscate`.

    ``fit(X, y)`` needs the true user ids ``y`` of the (normalized) pilot rows.
    """

    def __init__(self, rho=0.5, v1=1.0, v2=1.0, w1=1.0, w2=1.0, k_epochs=5, max_rounds=200, tol=1e-4,
                 hidden=(256, 256), lr=0.001, batch_size=1024, residual=False, init="he", la_cap=None,
                 adversary_epochs=None, privatizer_epochs=None, random_state=0):
        self.rho = rho
        self.v1 = v1
        self.v2 = v2
        self.w1 = w1
        self.w2 = w2
        self.k_epochs = k_epochs
        self.max_rounds = max_rounds
        self.tol = tol
        self.hidden = hidden
        self.lr = lr
        self.batch_size = batch_size
        self.residual = residual
        self.init = init
        self.la_cap = la_cap
        self.adversary_epochs = adversary_epochs
        self.privatizer_epochs = privatizer_epochs
        self.random_state = random_state

    def gap_params(self) -> GapParams:
        return GapParams(
            rho=float(self.rho),
            weights=MetricWeights(self.v1, self.v2, self.w1, self.w2),
            k_epochs=int(self.k_epochs),
            max_rounds=int(self.max_rounds),
            tol=float(self.tol),
            seed=self.random_state,
            hidden=tuple(self.hidden),
            adversary_hidden=tuple(self.hidden),
            lr=float(self.lr),
            batch_size=int(self.batch_size),
            residual=bool(self.residual),
            init=self.init,
            la_cap=self.la_cap if self.la_cap is None or isinstance(self.la_cap, str) else float(self.la_cap),
            adversary_epochs=self.adversary_epochs,
            privatizer_epochs=self.privatizer_epochs,
        )

    def fit(self, X, y=None, locations=None):
        if y is None:
            raise ValueError("GapPrivatizer.fit needs the user ids y")
        X = check_matrix(X)
        self.model_ = train_gap(X, y, self.gap_params(), locations)
        self.history_ = self.model_.history
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_matrix(X)
        check_width(X, self.n_features_in_)
        return gap_obfuscate(self.model_, X)
