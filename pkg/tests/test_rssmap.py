import json
import math

import numpy as np
import pytest

from rsspriv import rssmap
from rsspriv.dataset import SynthConfig, denormalize, fit_normalizer, normalize, synthesize
from rsspriv.metrics import u2_map_error


def _gd_least_squares(z, t, iters=20_000):
    """Plain gradient descent on 0.5 ||Z a - t||^2 / n with the exact Lipschitz step."""
    n = z.shape[0]
    a = np.zeros(z.shape[1])
    step = n / np.linalg.eigvalsh(z.T @ z).max()
    for _ in range(iters):
        a -= step * (z.T @ (z @ a - t)) / n
    return a


def test_recovers_planted_alpha():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 5))
    x[:, 2] = 2.0 + 3.0 * x[:, 0]
    model = rssmap.fit(x)
    np.testing.assert_allclose(model.alpha, [2.0, 3.0, 0.0, 0.0, 0.0], atol=1e-9)
    assert not model.fallback
    np.testing.assert_allclose(rssmap.predict(model, x), x[:, 2], atol=1e-9)
    assert rssmap.rmse(model, x) < 1e-9


def test_matches_gradient_descent_oracle():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(500, 6))
    x[:, 2] = x @ rng.normal(size=6) * 0.3 + rng.normal(size=500)
    model = rssmap.fit(x)
    z, t = rssmap.design(x)
    np.testing.assert_allclose(model.alpha, _gd_least_squares(z, t), atol=1e-6)


def test_rank_deficient_falls_back_to_ridge():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(100, 5))
    x[:, 4] = x[:, 3]
    with pytest.warns(rssmap.RankDeficiencyWarning):
        model = rssmap.fit(x)
    assert model.fallback and model.ridge == rssmap.FALLBACK_RIDGE
    assert np.all(np.isfinite(model.alpha))


def test_requires_more_rows_than_features():
    with pytest.raises(ValueError):
        rssmap.fit(np.zeros((4, 4)))


def test_predict_zero_alpha_and_dimension_check():
    model = rssmap.RssModel(np.zeros(4))
    assert np.all(rssmap.predict(model, np.ones((3, 4))) == 0)
    with pytest.raises(ValueError):
        rssmap.predict(model, np.ones((3, 5)))


def test_permutation_invariant():
    d = synthesize(5, 1000, seed=0)
    x = normalize(d, fit_normalizer(d)).values
    perm = np.random.default_rng(1).permutation(len(x))
    np.testing.assert_allclose(rssmap.fit(x).alpha, rssmap.fit(x[perm]).alpha, atol=1e-12)


def test_least_squares_beats_mean_predictor():
    d = synthesize(5, 1000, seed=0)
    x = normalize(d, fit_normalizer(d)).values
    model = rssmap.fit(x)
    mean_rmse = float(np.sqrt(np.mean((x[:, 2] - x[:, 2].mean()) ** 2)))
    assert rssmap.rmse(model, x) <= mean_rmse


def test_predictions_in_dbm_via_denormalize():
    d = synthesize(5, 1000, seed=0)
    s = fit_normalizer(d)
    f = normalize(d, s)
    model = rssmap.fit(f)
    pred_norm = rssmap.predict(model, f)
    full = f.values.copy()
    full[:, 2] = pred_norm
    pred_dbm = denormalize(full, s)[:, 2]
    rmse_dbm = float(np.sqrt(np.mean((pred_dbm - d.features[:, 2]) ** 2)))
    assert math.isclose(rmse_dbm, rssmap.rmse(model, f, s), rel_tol=1e-9)


def test_rmse_recovers_shadowing_std():
    sigma_sh = 4.0
    d = synthesize(5, 20_000, seed=0, geom=SynthConfig(rss_model="linear", shadowing_std=sigma_sh))
    s = fit_normalizer(d)
    f = normalize(d, s)
    err = rssmap.rmse(rssmap.fit(f), f, s)
    assert abs(err - sigma_sh) <= 0.05 * sigma_sh


def _alpha_ridge(x, ridge=rssmap.DIFF_RIDGE):
    z, t = rssmap.design(x)
    return np.linalg.solve(z.T @ z + ridge * np.eye(z.shape[1]), z.T @ t)


def test_alpha_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(40, 5))
    g = rng.normal(size=5)
    dx = rssmap.fit_differentiable(x, g)
    h = 1e-5
    for i, j in [(0, 0), (3, 2), (17, 4), (39, 1), (21, 3)]:
        xp, xm = x.copy(), x.copy()
        xp[i, j] += h
        xm[i, j] -= h
        fd = (g @ _alpha_ridge(xp) - g @ _alpha_ridge(xm)) / (2 * h)
        assert math.isclose(dx[i, j], fd, rel_tol=1e-4, abs_tol=1e-10)


def test_zero_upstream_gives_zero_gradient():
    x = np.random.default_rng(0).normal(size=(20, 4))
    assert np.all(rssmap.fit_differentiable(x, np.zeros(4)) == 0)


def test_u2_gradient_finite_differences_and_direction():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(60, 5))
    y = x + 0.2 * rng.normal(size=x.shape)
    val, g = rssmap.u2_value_and_grad(x, y)
    assert math.isclose(val, u2_map_error(x, y, ridge=rssmap.DIFF_RIDGE), rel_tol=1e-9)
    h = 1e-6
    for i, j in [(0, 0), (10, 2), (59, 4)]:
        yp, ym = y.copy(), y.copy()
        yp[i, j] += h
        ym[i, j] -= h
        fd = (rssmap.u2_value_and_grad(x, yp)[0] - rssmap.u2_value_and_grad(x, ym)[0]) / (2 * h)
        assert math.isclose(g[i, j], fd, rel_tol=1e-4, abs_tol=1e-9)
    step = 1e-3 / np.linalg.norm(g)
    assert rssmap.u2_value_and_grad(x, y + step * g)[0] > val
    assert rssmap.u2_value_and_grad(x, y - step * g)[0] < val


def test_u2_at_identity_is_maximal():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(60, 5))
    val, g = rssmap.u2_value_and_grad(x, x)
    assert val == 0.0
    assert np.all(g == 0.0)
    for _ in range(5):
        assert rssmap.u2_value_and_grad(x, x + 1e-4 * rng.normal(size=x.shape))[0] < 0


def test_json_export_round_trip():
    d = synthesize(3, 300, seed=0)
    f = normalize(d, fit_normalizer(d))
    model = rssmap.fit(f)
    text = model.to_json(d.feature_names)
    payload = json.loads(text)
    assert payload["features"] == ["intercept", "lat", "lon", "alt", "noise"]
    np.testing.assert_array_equal(rssmap.RssModel.from_json(text).alpha, model.alpha)


def test_regressor_estimator():
    d = synthesize(3, 300, seed=0)
    x = normalize(d, fit_normalizer(d)).values
    reg = rssmap.RssRegressor().fit(x)
    np.testing.assert_array_equal(reg.alpha_, rssmap.fit(x).alpha)
    assert reg.get_params() == {"ridge": 0.0}
    assert reg.predict(x).shape == (300,)
