import csv
import math

import numpy as np
import pytest

from rsspriv import rssmap
from rsspriv.adversary import InferenceAdversary
from rsspriv.dataset import fit_normalizer, normalize, synthesize
from rsspriv.metrics import MetricWeights, u1_distortion
from rsspriv.privatizers.gap import (
    GapParams,
    GapPrivatizer,
    gap_obfuscate,
    gap_privatizer_loss,
    prior_adversary_loss,
    train_gap,
    write_history_csv,
)

SMALL = dict(hidden=(16, 16), adversary_hidden=(16, 16), batch_size=256)


@pytest.fixture(scope="module")
def block():
    d = synthesize(4, 600, seed=0)
    f = normalize(d, fit_normalizer(d))
    return f.values, f.user_ids


@pytest.fixture(scope="module")
def adversary(block):
    x, labels = block
    return InferenceAdversary(hidden=(16, 16), random_state=0, max_epochs=20).fit(x, labels, x[:, :2])


def test_loss_gradient_matches_finite_differences(block, adversary):
    x, labels = block
    x, labels = x[:60], labels[:60]
    y = x + 0.3 * np.random.default_rng(0).normal(size=x.shape)
    p = GapParams(rho=0.6)
    _, g, _ = gap_privatizer_loss(x, y, adversary, labels, x[:, :2], p)
    h = 1e-6
    for i, j in [(0, 0), (5, 2), (31, 3), (59, 4), (17, 1)]:
        yp, ym = y.copy(), y.copy()
        yp[i, j] += h
        ym[i, j] -= h
        fd = (gap_privatizer_loss(x, yp, adversary, labels, x[:, :2], p)[0]
              - gap_privatizer_loss(x, ym, adversary, labels, x[:, :2], p)[0]) / (2 * h)
        assert math.isclose(g[i, j], fd, rel_tol=1e-4, abs_tol=1e-9)


def test_loss_weight_degeneracy(block, adversary):
    x, labels = block
    y = x + 0.5
    locs = x[:, :2]
    lp1, _, parts = gap_privatizer_loss(x, y, adversary, labels, locs, GapParams(rho=1.0))
    assert math.isclose(lp1, -parts["u"], rel_tol=1e-12)
    assert math.isclose(parts["u1"], u1_distortion(x, y), rel_tol=1e-12)
    lp0, _, parts0 = gap_privatizer_loss(x, y, adversary, labels, locs, GapParams(rho=0.0))
    assert math.isclose(lp0, -adversary.loss(y, labels, locs), rel_tol=1e-12)
    assert math.isclose(parts0["la"], adversary.loss(y, labels, locs), rel_tol=1e-12)


def test_loss_sign_structure(block, adversary):
    x, labels = block
    locs = x[:, :2]
    near, far = x + 0.01, x + 1.0
    p = GapParams(rho=1.0)
    assert gap_privatizer_loss(x, near, adversary, labels, locs, p)[0] < gap_privatizer_loss(x, far, adversary, labels, locs, p)[0]


def test_dropping_u2_from_training(block, adversary):
    x, labels = block
    p = GapParams(rho=1.0, weights=MetricWeights(w2=0.0))
    _, _, parts = gap_privatizer_loss(x, x + 0.2, adversary, labels, x[:, :2], p)
    assert parts["u2"] == 0.0


def test_zero_initialized_privatizer(block):
    x, labels = block
    model = train_gap(x, labels, GapParams(max_rounds=1, k_epochs=1, init="zeros", **SMALL))
    fresh = model.privatizer.copy()
    for w in fresh.weights:
        w[:] = 0
    for b in fresh.biases:
        b[:] = 0
    model.privatizer = fresh
    y = gap_obfuscate(model, x)
    assert np.all(y == 0)
    assert math.isclose(u1_distortion(x, y), -np.mean(np.linalg.norm(x, axis=1)), rel_tol=1e-12)


def test_same_seed_bit_identical(block):
    x, labels = block
    p = GapParams(rho=0.5, max_rounds=3, k_epochs=2, **SMALL)
    a, b = train_gap(x, labels, p), train_gap(x, labels, p)
    for s, t in zip(a.privatizer.params, b.privatizer.params):
        np.testing.assert_array_equal(s, t)
    assert a.history == b.history
    np.testing.assert_array_equal(gap_obfuscate(a, x), gap_obfuscate(b, x))


def test_obfuscation_is_deterministic(block):
    x, labels = block
    model = train_gap(x, labels, GapParams(max_rounds=1, k_epochs=1, **SMALL))
    np.testing.assert_array_equal(gap_obfuscate(model, x[:5]), gap_obfuscate(model, x)[:5])
    with pytest.raises(ValueError):
        gap_obfuscate(model, x[:, :3])


def test_high_rho_reduces_distortion(block):
    x, labels = block
    model = train_gap(x, labels, GapParams(rho=0.99, max_rounds=30, **SMALL))
    first, last = model.history[0], model.history[-1]
    assert last["u1"] > first["u1"]
    assert abs(u1_distortion(x, gap_obfuscate(model, x))) < abs(first["u1"])


def test_residual_identity_start(block):
    x, labels = block
    model = train_gap(x, labels, GapParams(rho=0.99, max_rounds=1, k_epochs=1, residual=True, init="zeros", **SMALL))
    # zero-initialized residual net starts at the identity and rho=0.99 keeps it there
    assert abs(u1_distortion(x, gap_obfuscate(model, x))) < 0.05


def test_minimax_descent_steps(block):
    x, labels = block
    locs = x[:, :2]
    model = train_gap(x, labels, GapParams(rho=0.5, max_rounds=2, k_epochs=1, **SMALL))
    adv, priv = model.adversary, model.privatizer
    y = gap_obfuscate(model, x)
    worse = 0
    for _ in range(20):
        before = adv.loss(y, labels, locs)
        adv.train_epoch(y, labels, locs)
        worse += adv.loss(y, labels, locs) > before
    assert worse <= 1
    from rsspriv.nncore import AdamState, adam_step

    opt = AdamState(lr=1e-4)
    p = model.params
    worse = 0
    for _ in range(20):
        out = priv.forward(x)
        lp, gy, _ = gap_privatizer_loss(x, out, adv, labels, locs, p)
        grads, _ = priv.backward(gy)
        adam_step(priv, grads, opt)
        worse += gap_privatizer_loss(x, priv.forward(x, cache=False), adv, labels, locs, p)[0] > lp
    assert worse <= 1


def test_history_csv(block, tmp_path):
    x, labels = block
    model = train_gap(x, labels, GapParams(max_rounds=2, k_epochs=1, **SMALL))
    path = tmp_path / "hist.csv"
    write_history_csv(model, path)
    rows = list(csv.DictReader(open(path, encoding="utf-8")))
    assert len(rows) == 2
    assert set(rows[0]) == {"round", "la", "lp", "u1", "u2", "u"}


def test_params_validation(block):
    with pytest.raises(ValueError):
        GapParams(rho=1.5)
    with pytest.raises(ValueError):
        GapParams(k_epochs=0)
    with pytest.raises(ValueError):
        GapParams(la_cap="posterior")
    with pytest.raises(ValueError):
        GapParams(adversary_epochs=0)
    x, _ = block
    with pytest.raises(ValueError):
        train_gap(x, np.zeros(len(x), dtype=int), GapParams(max_rounds=1, **SMALL))


def test_estimator(block):
    x, labels = block
    est = GapPrivatizer(rho=0.5, max_rounds=1, k_epochs=1, hidden=(16, 16), batch_size=256).fit(x, labels)
    assert est.transform(x).shape == x.shape
    assert est.get_params()["rho"] == 0.5
    with pytest.raises(ValueError):
        GapPrivatizer().fit(x)


def test_u2_path_used_in_loss(block, adversary):
    x, labels = block
    y = x + np.random.default_rng(1).normal(scale=0.3, size=x.shape)
    _, _, parts = gap_privatizer_loss(x, y, adversary, labels, x[:, :2], GapParams())
    assert math.isclose(parts["u2"], rssmap.u2_value_and_grad(x, y)[0], rel_tol=1e-12)



def test_he_zero_out_residual_is_identity(block):
    from rsspriv.nncore import Mlp

    x, _ = block
    net = Mlp([x.shape[1], 16, 16, x.shape[1]], seed=0, init="he-zero-out")
    assert np.array_equal(x + net.forward(x), x)
    assert np.any(net.weights[0] != 0)


def test_prior_adversary_loss_by_hand():
    labels = np.array([0, 0, 1, 1])
    locs = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    w = MetricWeights(v1=2.0, v2=3.0)
    assert prior_adversary_loss(labels, locs, w) == pytest.approx(2.0 * math.log(2) + 3.0, abs=1e-12)


def test_la_cap_clips_loss_and_gradient(block, adversary):
    x, labels = block
    y = x + 3.0
    p = GapParams(rho=0.3, **SMALL)
    _, grad, parts = gap_privatizer_loss(x, y, adversary, labels, x[:, :2], p)
    capped = GapParams(rho=0.3, la_cap=parts["la"] / 2, **SMALL)
    _, grad_c, parts_c = gap_privatizer_loss(x, y, adversary, labels, x[:, :2], capped)
    assert parts_c["la"] == parts["la"] / 2
    # above the cap only the utility term drives the gradient
    _, grad_u, _ = gap_privatizer_loss(x, y, adversary, labels, x[:, :2], GapParams(rho=0.3, la_cap=-1e9, **SMALL))
    assert np.array_equal(grad_c, grad_u) and not np.array_equal(grad_c, grad)


def test_prior_cap_bounds_training(block):
    x, labels = block
    p = GapParams(rho=0.1, max_rounds=5, la_cap="prior", residual=True, init="he-zero-out", **SMALL)
    model = train_gap(x, labels, p)
    cap = prior_adversary_loss(labels, x[:, :2], p.weights)
    # U <= 0, so Lp = -rho U - (1 - rho) min(La, cap) >= -(1 - rho) cap
    assert all(h["lp"] >= -(1 - p.rho) * cap - 1e-12 for h in model.history)
