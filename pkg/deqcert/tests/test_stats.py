import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from deqcert import stats
from deqcert.exceptions import ArgumentError


@pytest.mark.parametrize('k, n, confidence, expected, tolerance', [
    (0, 100, 0.999, 0.0, 0.0),
    (10000, 10000, 0.9995, 0.0005 ** (1.0 / 10000), 1e-6),
    (5, 10, 0.95, 0.2224, 5e-4),
])
def test_lower_conf_bound(k, n, confidence, expected, tolerance):
    assert abs(stats.lower_conf_bound(k, n, confidence) - expected) <= tolerance


@pytest.mark.parametrize('k, n, confidence', [
    (-1, 10, 0.9),
    (11, 10, 0.9),
    (1, 0, 0.9),
    (1, 10, 1.0),
    (1, 10, 0.0),
])
def test_lower_conf_bound_rejects_bad_arguments(k, n, confidence):
    with pytest.raises(ArgumentError):
        stats.lower_conf_bound(k, n, confidence)


@given(st.integers(min_value=1, max_value=500), st.data())
def test_lower_conf_bound_monotone_in_k(n, data):
    k = data.draw(st.integers(min_value=0, max_value=n - 1))
    assert stats.lower_conf_bound(k, n, 0.99) <= stats.lower_conf_bound(k + 1, n, 0.99)


@given(st.integers(min_value=1, max_value=500), st.data(),
       st.floats(min_value=0.5, max_value=0.99), st.floats(min_value=0.0, max_value=0.009))
def test_lower_conf_bound_monotone_in_confidence(n, data, confidence, extra):
    k = data.draw(st.integers(min_value=0, max_value=n))
    assert stats.lower_conf_bound(k, n, confidence + extra) <= stats.lower_conf_bound(k, n, confidence) + 1e-12


@given(st.integers(min_value=1, max_value=2000), st.data())
def test_lower_conf_bound_below_point_estimate(n, data):
    k = data.draw(st.integers(min_value=0, max_value=n))
    assert stats.lower_conf_bound(k, n, 0.999) <= k / n


@pytest.mark.parametrize('p', [0.3, 0.5, 0.9, 0.99])
def test_lower_conf_bound_coverage(p):
    n, alpha, trials = 50, 0.01, 10000
    bounds = np.array([stats.lower_conf_bound(k, n, 1 - alpha) for k in range(n + 1)])
    successes = np.random.default_rng(2024).binomial(n, p, size=trials)

    covered = np.mean(bounds[successes] <= p)
    standard_error = math.sqrt(alpha * (1 - alpha) / trials)
    assert covered >= 1 - alpha - 3 * standard_error


def test_confidence_spec_splits_alpha():
    spec = stats.ConfidenceSpec(alpha=0.001)
    assert spec.alpha_tilde == 0.0005
    assert spec.confidence == 1 - 0.0005

    with pytest.raises(ArgumentError):
        stats.ConfidenceSpec(alpha=0)


def test_inv_norm_cdf_values():
    assert stats.inv_norm_cdf(0.5) == 0.0
    assert abs(stats.inv_norm_cdf(0.975) - 1.959964) <= 1e-6


@given(st.floats(min_value=1e-4, max_value=0.5))
def test_inv_norm_cdf_antisymmetric(p):
    assert abs(stats.inv_norm_cdf(p) + stats.inv_norm_cdf(1 - p)) <= 1e-9


def test_inv_norm_cdf_strictly_increasing():
    grid = np.linspace(1e-6, 1 - 1e-6, 5001)
    values = [stats.inv_norm_cdf(p) for p in grid]
    assert np.all(np.diff(values) > 0)


@pytest.mark.parametrize('p', [0.0, 1.0, -0.1, 1.5])
def test_inv_norm_cdf_domain(p):
    with pytest.raises(ArgumentError):
        stats.inv_norm_cdf(p)


def test_norm_cdf_inverts_inv_norm_cdf():
    for p in (0.01, 0.3, 0.5, 0.9, 0.999):
        assert abs(stats.norm_cdf(stats.inv_norm_cdf(p)) - p) <= 1e-12


def test_gaussian_draw_zero_sigma():
    assert np.array_equal(stats.gaussian_draw(stats.NoiseStream(1, 2, 3), 5, 0.0), np.zeros(5))


def test_gaussian_draw_is_deterministic():
    stream = stats.NoiseStream(seed=7, point_index=3, sample_index=42)
    assert np.array_equal(stats.gaussian_draw(stream, 6, 0.5), stats.gaussian_draw(stream, 6, 0.5))


def test_gaussian_draw_depends_on_every_coordinate():
    base = stats.gaussian_draw(stats.NoiseStream(7, 3, 42), 4, 1.0)
    for other in (stats.NoiseStream(8, 3, 42), stats.NoiseStream(7, 4, 42), stats.NoiseStream(7, 3, 43)):
        assert not np.array_equal(base, stats.gaussian_draw(other, 4, 1.0))


@pytest.mark.parametrize('dim', [1, 2, 3, 5, 16])
def test_gaussian_batch_independent_of_batching(dim):
    whole = stats.gaussian_batch(5, 9, 0, 100, dim, 1.0)
    pieces = np.vstack([stats.gaussian_batch(5, 9, start, 10, dim, 1.0) for start in range(0, 100, 10)])
    assert np.array_equal(whole, pieces)

    single = stats.gaussian_draw(stats.NoiseStream(5, 9, 37), dim, 1.0)
    assert np.array_equal(whole[37], single)


def test_gaussian_batch_scales_with_sigma():
    unit = stats.gaussian_batch(1, 0, 0, 20, 3, 1.0)
    assert np.allclose(stats.gaussian_batch(1, 0, 0, 20, 3, 0.25), 0.25 * unit, rtol=0, atol=1e-15)


def test_gaussian_batch_moments():
    draws = stats.gaussian_batch(0, 0, 0, 10 ** 6, 1, 1.0)[:, 0]
    assert abs(np.mean(draws)) <= 0.005
    assert abs(np.var(draws) - 1.0) <= 0.01


def test_selection_rng_is_deterministic():
    first = stats.selection_rng(3, 1).integers(0, 1000, size=10)
    second = stats.selection_rng(3, 1).integers(0, 1000, size=10)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, stats.selection_rng(3, 2).integers(0, 1000, size=10))


def test_streams_of_a_point_are_distinct():
    noise = stats.gaussian_batch(0, 7, 0, 50, 2, 1.0)
    augment = stats.gaussian_batch(0, 7, 0, 50, 2, 1.0, stream=stats.AUGMENT_STREAM)

    assert np.array_equal(noise, stats.gaussian_batch(0, 7, 0, 50, 2, 1.0, stream=stats.NOISE_STREAM))
    assert not np.any(np.all(np.isclose(noise, augment), axis=1))
