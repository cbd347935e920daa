import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from rsspriv.dataset import fit_normalizer, normalize, synthesize
from rsspriv.metrics import MetricWeights, u1_distortion
from rsspriv.privatizers.infotheory import (
    ItParams,
    ItPrivatizer,
    KdeModel,
    batch_bounds,
    build_codebook,
    code_utilities,
    code_weights,
    expected_utility,
    fit_kde,
    it_obfuscate,
    weights_from_utilities,
)


@pytest.fixture(scope="module")
def data():
    d = synthesize(5, 2000, seed=0)
    return normalize(d, fit_normalizer(d)).values


def test_kde_single_center_moments():
    kde = KdeModel(np.array([[1.0, -2.0]]), np.array([0.5, 2.0]))
    s = kde.sample(200_000, seed=0)
    np.testing.assert_allclose(s.mean(axis=0), [1.0, -2.0], atol=0.02)
    np.testing.assert_allclose(s.std(axis=0), [0.5, 2.0], rtol=0.01)


def test_kde_zero_bandwidth_returns_pilot_rows(data):
    kde = fit_kde(data, 0.0)
    s = kde.sample(100, seed=1)
    pilot = {tuple(r) for r in data}
    assert all(tuple(r) in pilot for r in s)


def test_kde_matches_pilot_moments(data):
    kde = fit_kde(data)
    s = kde.sample(100_000, seed=2)
    np.testing.assert_allclose(s.mean(axis=0), data.mean(axis=0), atol=0.05)
    # a kernel mixture adds the bandwidth variance on top of the pilot variance
    mixture_std = np.sqrt(data.var(axis=0) + kde.bandwidth**2)
    np.testing.assert_allclose(s.std(axis=0), mixture_std, rtol=0.01)
    assert np.all(s.std(axis=0) <= 1.1 * data.std(axis=0))


def test_kde_constant_feature_stays_proper():
    x = np.column_stack([np.random.default_rng(0).normal(size=50), np.ones(50)])
    kde = fit_kde(x)
    assert np.all(kde.bandwidth > 0)


def test_codebook_structure(data):
    x = data[:128]
    book = build_codebook(fit_kde(data), x, ItParams(codebook_size=2), seed=0)
    assert book.size == 2
    np.testing.assert_array_equal(book.codes[book.identity_slot], x)
    u = code_utilities(x, book)
    assert u[book.identity_slot] == 0.0
    assert u[0] < 0


def test_codes_follow_kde(data):
    kde = fit_kde(data)
    book = build_codebook(kde, data[:128], ItParams(), seed=3)
    sampled = book.codes[:-1].reshape(-1, data.shape[1])
    fresh = kde.sample(sampled.shape[0], seed=99)
    for j in range(data.shape[1]):
        assert stats.ks_2samp(sampled[:, j], fresh[:, j]).pvalue > 0.001


def test_weights_examples():
    np.testing.assert_allclose(weights_from_utilities([-3.0, -1.0, 0.0, -7.0], 0.0), 0.25, atol=0)
    w = weights_from_utilities([0.0, -1.0], 1.0)
    np.testing.assert_allclose(w, [1 / (1 + math.exp(-1)), math.exp(-1) / (1 + math.exp(-1))], rtol=1e-12)
    assert abs(w[0] - 0.731) < 5e-4
    big = weights_from_utilities([0.0, -1.0, -2.0], 1e4)
    assert big[0] > 0.99


def test_large_mu_picks_identity(data):
    x = data[:128]
    book = build_codebook(fit_kde(data), x, ItParams(), seed=0)
    w = code_weights(x, book, ItParams(mu1=1e3))
    assert w[book.identity_slot] > 0.99


@settings(max_examples=50)
@given(arrays(np.float64, 8, elements=st.floats(-20, 0)), st.floats(0, 10), st.floats(0.1, 10))
def test_weight_properties(u, mu, c):
    w = weights_from_utilities(u, mu)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1) <= 1e-12
    np.testing.assert_allclose(weights_from_utilities(u * c, mu / c), w, rtol=1e-9, atol=1e-300)
    if mu > 0:
        for i in range(len(u)):
            for j in range(len(u)):
                if u[i] > u[j] and mu * (u[i] - u[j]) > 1e-9:
                    assert w[i] > w[j]


def test_expected_utility_nondecreasing(data):
    x = data[:128]
    book = build_codebook(fit_kde(data), x, ItParams(), seed=0)
    u = code_utilities(x, book)
    grid = np.linspace(0, 5, 51)
    e = [expected_utility(u, mu) for mu in grid]
    assert all(b >= a - 1e-12 for a, b in zip(e, e[1:]))
    assert math.isclose(e[0], u.mean(), rel_tol=1e-12)


def test_batch_bounds():
    assert batch_bounds(300, 128, 7) == [(0, 128), (128, 256), (256, 300)]
    assert batch_bounds(260, 128, 7) == [(0, 128), (128, 260)]
    assert batch_bounds(100, 128, 7) == [(0, 100)]
    with pytest.raises(ValueError):
        batch_bounds(5, 128, 7)


def test_obfuscate_deterministic_and_blockwise(data):
    kde = fit_kde(data)
    p = ItParams(mu1=0.5)
    a, choices = it_obfuscate(data[:700], p, kde, seed=5, return_choices=True)
    b = it_obfuscate(data[:700], p, kde, seed=5)
    np.testing.assert_array_equal(a, b)
    assert len(choices) == 6
    for (lo, hi), c in zip(batch_bounds(700, 128, 7), choices):
        if c == p.codebook_size - 1:
            np.testing.assert_array_equal(a[lo:hi], data[lo:hi])


def test_mu_zero_uniform_selection(data):
    kde = fit_kde(data)
    _, choices = it_obfuscate(np.tile(data[:128], (40, 1)), ItParams(mu1=0.0), kde, seed=0, return_choices=True)
    # 40 draws from a uniform over 51 codes
    assert sum(c == 50 for c in choices) <= 5


def test_high_mu_gives_near_zero_distortion(data):
    y = it_obfuscate(data, ItParams(mu1=1e3), fit_kde(data), seed=0)
    assert abs(u1_distortion(data, y)) < 1e-12


def test_u1_only_weights(data):
    x = data[:128]
    book = build_codebook(fit_kde(data), x, ItParams(), seed=0)
    u = code_utilities(x, book, MetricWeights(w1=1.0, w2=0.0))
    diff = book.codes - x[None]
    np.testing.assert_allclose(u, -np.linalg.norm(diff, axis=2).mean(axis=1), rtol=1e-12)


def test_shared_codebook_option(data):
    kde = fit_kde(data)
    y = it_obfuscate(data[:512], ItParams(mu1=0.0, shared_codebook=True), kde, seed=1)
    assert y.shape == (512, data.shape[1])


def test_small_code_batch_rejected(data):
    with pytest.raises(ValueError):
        it_obfuscate(data, ItParams(code_batch_size=5), fit_kde(data), seed=0)


def test_estimator(data):
    est = ItPrivatizer(mu1=1.0, random_state=0).fit(data)
    y = est.transform(data)
    assert y.shape == data.shape
    assert est.get_params()["codebook_size"] == 51
    again = ItPrivatizer(mu1=1.0, random_state=0).fit(data).transform(data)
    np.testing.assert_array_equal(y, again)
