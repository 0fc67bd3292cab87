import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hlfszo.core import DimensionError, HlfszoError, ObjectiveOracle
from hlfszo.sampling import (RngStream, derive, estimate_smoothed_gradient, estimate_smoothed_value, mix64,
                             sample_ball, sample_sphere, single_point_estimate)


def oracle(fn, d):
    return ObjectiveOracle(fn, d)


def sq_norm(x):
    return np.sum(np.asarray(x) ** 2, axis=-1)


def test_mix64_frozen_values():
    # SplitMix64 reference outputs for the first states of seed 0.
    assert mix64(0x9E3779B97F4A7C15) == 0xE220A8397B1DCDAF
    assert mix64(0) == 0


def test_streams_are_reproducible():
    a = RngStream(42).standard_normal(5)
    b = RngStream(42).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, RngStream(43).standard_normal(5))


def test_derive_depends_only_on_seed_and_index():
    s = RngStream(9)
    first = s.derive(3).seed
    s.standard_normal(100)
    assert s.derive(3).seed == first
    assert derive(RngStream(9), 1, 2).seed == RngStream(9).derive(1).derive(2).seed
    assert len({RngStream(9).derive(i).seed for i in range(1000)}) == 1000
    with pytest.raises(ValueError):
        s.derive(-1)


def test_sphere_d1_is_plus_minus_one():
    u = sample_sphere(RngStream(1), 1, 10_000)
    assert set(np.unique(u)) == {-1.0, 1.0}
    assert abs(np.mean(u > 0) - 0.5) <= 0.02


def test_sphere_d5_unit_norm():
    u = sample_sphere(RngStream(2), 5, 10_000)
    assert np.max(np.abs(np.linalg.norm(u, axis=1) - 1.0)) <= 1e-12


def test_sphere_d3_mean_zero():
    n = 10 ** 6
    u = sample_sphere(RngStream(3), 3, n)
    assert np.all(np.abs(u.mean(axis=0)) <= 3 / np.sqrt(3 * n))


def test_sphere_shapes_and_errors():
    assert sample_sphere(RngStream(0), 4).shape == (4,)
    assert sample_sphere(RngStream(0), 4, (2, 3)).shape == (2, 3, 4)
    with pytest.raises(DimensionError):
        sample_sphere(RngStream(0), 0)


def test_sphere_chunked_draws_match_single_draws():
    a = sample_sphere(RngStream(5), 3, 50)
    s = RngStream(5)
    b = np.array([sample_sphere(s, 3) for _ in range(50)])
    assert np.array_equal(a, b)


def test_ball_inside_unit_ball():
    y = sample_ball(RngStream(4), 7, 10_000)
    assert np.all(np.linalg.norm(y, axis=1) <= 1.0)
    with pytest.raises(DimensionError):
        sample_ball(RngStream(0), 0)


def test_ball_second_moment_d2():
    y = sample_ball(RngStream(5), 2, 10 ** 6)
    assert abs(np.mean(np.sum(y * y, axis=1)) - 0.5) <= 0.005


def test_ball_d1_uniform_mean():
    y = sample_ball(RngStream(6), 1, 10 ** 6)
    assert abs(y.mean()) <= 0.005
    assert y.min() >= -1 and y.max() <= 1


def test_single_point_estimate_examples():
    o = oracle(sq_norm, 2)
    g = single_point_estimate(o, [0.0, 0.0], 0.1, [1.0, 0.0])
    np.testing.assert_allclose(g, [0.2, 0.0], rtol=1e-12)
    assert o.query_count == 1
    lin = oracle(lambda x: 3 * x[..., 0], 1)
    assert single_point_estimate(lin, [0.0], 0.5, [1.0])[0] == pytest.approx(3.0, rel=1e-15)
    zero = oracle(lambda x: 0 * x[..., 0], 3)
    assert np.all(single_point_estimate(zero, [1.0, 2.0, 3.0], 0.3, [0.0, 1.0, 0.0]) == 0)


def test_single_point_estimate_rejects_bad_radius():
    with pytest.raises(HlfszoError):
        single_point_estimate(oracle(sq_norm, 1), [0.0], 0.0, [1.0])


def test_smoothed_value_quadratic_closed_form():
    o = oracle(sq_norm, 2)
    mean, se = estimate_smoothed_value(o, [0.0, 0.0], 0.1, 10 ** 5, RngStream(7))
    assert abs(mean - 0.005) <= 3 * se
    assert o.query_count == 10 ** 5


def test_smoothed_value_linear_is_exact():
    o = oracle(lambda x: x @ np.array([1.0, -2.0]) + 0.5, 2)
    mean, se = estimate_smoothed_value(o, [0.3, 0.2], 0.7, 10 ** 5, RngStream(8))
    assert abs(mean - (0.3 - 0.4 + 0.5)) <= 3 * se


def test_smoothed_value_tiny_radius():
    o = oracle(lambda x: np.sin(x[..., 0]) + x[..., 1] ** 2, 2)
    x = np.array([0.4, -0.3])
    mean, se = estimate_smoothed_value(o, x, 1e-8, 1000, RngStream(9))
    assert abs(mean - (np.sin(0.4) + 0.09)) <= 1e-12 + 3 * se


def test_smoothed_gradient_quadratic():
    o = oracle(sq_norm, 2)
    g, se = estimate_smoothed_gradient(o, [1.0, 0.0], 0.1, 10 ** 6, RngStream(10), with_stderr=True)
    assert np.all(np.abs(g - [2.0, 0.0]) <= 3 * se)
    assert o.query_count == 10 ** 6


def test_smoothed_gradient_constant_and_linear():
    c = oracle(lambda x: 0 * x[..., 0] + 4.0, 3)
    g, se = estimate_smoothed_gradient(c, np.zeros(3), 0.2, 10 ** 5, RngStream(11), with_stderr=True)
    assert np.all(np.abs(g) <= 3 * se + 1e-15)
    lin = oracle(lambda x: x @ np.array([1.0, 2.0]), 2)
    g, se = estimate_smoothed_gradient(lin, [5.0, -1.0], 0.3, 10 ** 6, RngStream(12), with_stderr=True)
    assert np.all(np.abs(g - [1.0, 2.0]) <= 3 * se)


def test_sample_count_must_be_at_least_two():
    with pytest.raises(ValueError):
        estimate_smoothed_value(oracle(sq_norm, 1), [0.0], 0.1, 1, RngStream(0))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 63), d=st.integers(1, 60), n=st.integers(1, 20))
def test_sphere_property_unit_norm_and_determinism(seed, d, n):
    u = sample_sphere(RngStream(seed), d, n)
    assert u.shape == (n, d)
    assert np.all(np.abs(np.linalg.norm(u, axis=1) - 1.0) <= 1e-12)
    assert np.array_equal(u, sample_sphere(RngStream(seed), d, n))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 63), d=st.integers(1, 60))
def test_ball_property_inside(seed, d):
    y = sample_ball(RngStream(seed), d, 50)
    assert np.all(np.linalg.norm(y, axis=1) <= 1.0 + 1e-15)
