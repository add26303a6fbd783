import math

import numpy as np
import pytest

from rdnn import sim
from rdnn.sim import NoiseSpec


def test_grid_sizes():
    assert sim.make_grid(2, 10).N == 100
    assert sim.make_grid(3, 5).N == 125
    np.testing.assert_array_equal(sim.make_grid(1, 4).points[:, 0], [0.25, 0.5, 0.75, 1.0])


def test_grid_ordering_last_index_fastest():
    g = sim.make_grid(2, 3)
    np.testing.assert_array_equal(g.points[:4], [[1 / 3, 1 / 3], [1 / 3, 2 / 3], [1 / 3, 1.0], [2 / 3, 1 / 3]])


@pytest.mark.parametrize("d,m", [(1, 7), (2, 10), (3, 5)])
def test_grid_invariants(d, m):
    g = sim.make_grid(d, m)
    assert g.points.shape == (m**d, d)
    assert np.all(g.points > 0) and np.all(g.points <= 1)
    for k in range(d):
        np.testing.assert_array_equal(np.unique(g.points[:, k]), np.arange(1, m + 1) / m)


@pytest.mark.parametrize("d,m", [(0, 5), (2, 0)])
def test_grid_rejects_degenerate(d, m):
    with pytest.raises(ValueError):
        sim.make_grid(d, m)


def test_rectangular_lattice():
    g = sim.GridSpec((79, 95))
    assert g.N == 7505 and g.d == 2
    with pytest.raises(ValueError):
        g.m


def _mean_2d_scalar(x1, x2):
    cot = math.cos(x1 * x1) / math.sin(x1 * x1)
    return -8.0 / (1.0 + math.exp(cot * math.cos(2 * math.pi * x2)))


def _mean_3d_scalar(x1, x2, x3):
    return math.exp(x1 / 3 + x2 / 3 + math.sqrt(x3 + 0.1))


def test_mean_2d_values():
    assert sim.mean_2d([0.5, 0.5]) == pytest.approx(-7.8437, abs=1e-4)
    assert sim.mean_2d([1.0, 0.25]) == pytest.approx(-4.0, abs=1e-12)
    assert sim.mean_2d([1.0, 0.75]) == pytest.approx(-4.0, abs=1e-12)


def test_mean_2d_rejects_undefined_cot():
    with pytest.raises(ValueError):
        sim.mean_2d([0.0, 0.5])


def test_mean_3d_values():
    assert sim.mean_3d([0.0, 0.0, 0.0]) == pytest.approx(1.3720, abs=1e-4)
    assert sim.mean_3d([1.0, 1.0, 1.0]) == pytest.approx(5.5590, abs=1e-3)
    assert sim.mean_3d([1.0, 1.0, 1.0]) > sim.mean_3d([0.2, 0.2, 0.2])


def test_means_match_scalar_reimplementation():
    g2 = sim.make_grid(2, 10)
    ref2 = np.array([_mean_2d_scalar(*p) for p in g2.points])
    assert np.max(np.abs(sim.mean_2d(g2.points) - ref2)) < 1e-12
    g3 = sim.make_grid(3, 5)
    ref3 = np.array([_mean_3d_scalar(*p) for p in g3.points])
    assert np.max(np.abs(sim.mean_3d(g3.points) - ref3)) < 1e-12


def test_gp_pointwise_variance_and_covariance():
    g = sim.make_grid(2, 10)
    rng = np.random.default_rng(1)
    draws = np.array([sim.sample_gp(g, rng) for _ in range(10_000)])
    np.testing.assert_allclose(draws.var(axis=0), 2.0, atol=0.1)
    i = int(np.flatnonzero(np.all(np.isclose(g.points, [0.1, 0.1]), axis=1))[0])
    j = int(np.flatnonzero(np.all(np.isclose(g.points, [0.3, 0.1]), axis=1))[0])
    expected = math.cos(2 * math.pi * 0.2) + 1.0
    assert expected == pytest.approx(1.3090, abs=1e-4)
    emp = np.mean(draws[:, i] * draws[:, j])
    assert abs(emp - expected) < 0.05


def test_gp_kernel_identity():
    rng = np.random.default_rng(0)
    x, y = rng.uniform(size=3), rng.uniform(size=3)
    # finite-rank representation: E[eta(x) eta(y)] = sum_k cos(2 pi (x_k - y_k)) exactly
    t = 2 * np.pi
    feat = lambda p: np.concatenate([np.cos(t * p), np.sin(t * p)])
    assert feat(x) @ feat(y) == pytest.approx(sim.gp_covariance(x, y), abs=1e-12)


def test_gp_is_periodic():
    coef = sim.gp_coefficients(3, np.random.default_rng(3))
    x = np.array([[0.2, 0.4, 0.9]])
    np.testing.assert_allclose(sim.eval_gp(coef, x), sim.eval_gp(coef, x + [1.0, 0, 0]), atol=1e-12)


def test_zero_noise_rows_equal_truth():
    g = sim.make_grid(2, 10)
    s = sim.simulate(g, "2d", NoiseSpec(gp_enabled=False, error_scale=0.0), 4, 0)
    for row in s.responses:
        np.testing.assert_array_equal(row, s.truth)


def test_simulate_shape():
    s = sim.simulate(sim.make_grid(2, 10), "2d", NoiseSpec(), 50, 1)
    assert s.responses.shape == (50, 100)
    assert np.all(np.isfinite(s.responses))
    assert s.truth.shape == (100,)


def test_cauchy_mixture_median():
    g = sim.make_grid(2, 10)
    s = sim.simulate(g, "2d", NoiseSpec(gp_enabled=False, error_kind="mixture_cauchy", weight=1.0), 100, 5)
    e = (s.responses - s.truth).ravel()
    assert e.size == 10_000
    assert -0.1 < np.median(e) < 0.1
    # Cauchy(0, 0.5): interquartile range is 2 * 0.5
    q1, q3 = np.quantile(e, [0.25, 0.75])
    assert q3 - q1 == pytest.approx(1.0, abs=0.1)


def test_slash_mixture_quartiles():
    rng = np.random.default_rng(11)
    e = sim.draw_errors(NoiseSpec(gp_enabled=False, error_kind="mixture_slash", weight=1.0), 200_000, rng)
    # oracle: quartiles of 0.5 Z / U by direct Monte Carlo on an independent stream
    r2 = np.random.default_rng(12)
    ref = 0.5 * r2.standard_normal(200_000) / r2.uniform(size=200_000)
    np.testing.assert_allclose(np.quantile(e, [0.25, 0.5, 0.75]), np.quantile(ref, [0.25, 0.5, 0.75]), atol=0.02)


def test_mixture_weight_zero_is_gaussian():
    rng = np.random.default_rng(2)
    e = sim.draw_errors(NoiseSpec(error_kind="mixture_cauchy", weight=0.0), 100_000, rng)
    assert e.std() == pytest.approx(1.0, abs=0.02)


def test_determinism():
    g = sim.make_grid(3, 5)
    a = sim.simulate(g, "3d", NoiseSpec(error_kind="mixture_slash", weight=0.3), 20, 42)
    b = sim.simulate(g, "3d", NoiseSpec(error_kind="mixture_slash", weight=0.3), 20, 42)
    assert a.responses.tobytes() == b.responses.tobytes()
    c = sim.simulate(g, "3d", NoiseSpec(error_kind="mixture_slash", weight=0.3), 20, 43)
    assert not np.array_equal(a.responses, c.responses)


def test_subject_substreams_are_order_independent():
    g = sim.make_grid(2, 10)
    noise = NoiseSpec()
    s = sim.simulate(g, "2d", noise, 6, 9)
    order = [5, 3, 0, 1, 4, 2]
    rows = np.array([sim.simulate_subject(g, s.truth, noise, 9, i) for i in order])
    np.testing.assert_array_equal(rows, s.responses[order])
    # a larger sample extends the smaller one row by row
    big = sim.simulate(g, "2d", noise, 10, 9)
    np.testing.assert_array_equal(big.responses[:6], s.responses)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        sim.simulate(sim.make_grid(3, 5), "2d", NoiseSpec(), 2, 0)


def test_custom_mean():
    g = sim.make_grid(1, 4)
    s = sim.simulate(g, "custom", NoiseSpec(gp_enabled=False, error_scale=0.0), 2, 0, truth=[1, 2, 3, 4])
    np.testing.assert_array_equal(s.responses, [[1, 2, 3, 4]] * 2)
    with pytest.raises(ValueError):
        sim.simulate(g, "custom", NoiseSpec(), 2, 0)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(error_kind="mixture_cauchy", weight=1.5)
    with pytest.raises(ValueError):
        NoiseSpec(error_kind="laplace")


def test_gp_moments_3d():
    # For eta ~ N(0, 3) the sample variance over R draws has sd sqrt(2 * 9 / R)
    # and a sample covariance has sd at most sqrt(18 / R); allow 4 sd.
    R = 10_000
    g = sim.make_grid(3, 5)
    s = sim.simulate(g, "3d", NoiseSpec(error_scale=0.0), R, seed=6)
    eta = s.responses - s.truth
    tol = 4 * math.sqrt(18 / R)
    np.testing.assert_allclose(eta.var(axis=0), 3.0, atol=tol)
    rng = np.random.default_rng(0)
    for i, j in rng.integers(0, g.N, size=(10, 2)):
        emp = np.mean((eta[:, i] - eta[:, i].mean()) * (eta[:, j] - eta[:, j].mean()))
        assert abs(emp - sim.gp_covariance(g.points[i], g.points[j])) < tol
