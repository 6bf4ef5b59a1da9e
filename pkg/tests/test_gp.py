import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fhsearch.gp import (
    GPFactorizationError,
    KernelSpec,
    LevelSetEstimate,
    gp_fit,
    gp_predict,
    grid_axis,
    level_set_error,
    transect_coordinates,
    transect_lse,
)
from fhsearch.posterior import NoiseModel


def test_kernel_values():
    k = KernelSpec(0.5, 2.0)
    assert k(0.0, 0.0)[0, 0] == 2.0
    assert k(0.0, 0.5)[0, 0] == pytest.approx(2.0 * np.exp(-0.5))
    with pytest.raises(ValueError):
        KernelSpec(0.0)
    with pytest.raises(ValueError):
        KernelSpec(kind="matern")


def test_prior_without_data():
    mean, var = gp_predict(gp_fit([], [], KernelSpec(1.0, 3.0)), [0.1, 0.2])
    np.testing.assert_array_equal(mean, 0.0)
    np.testing.assert_array_equal(var, 3.0)


def test_interpolates_noise_free_data():
    x = np.array([0.1, 0.4, 0.8])
    y = np.array([1.0, -2.0, 0.5])
    mean, var = gp_predict(gp_fit(x, y, KernelSpec(0.3)), x)
    np.testing.assert_allclose(mean, y, atol=1e-6)
    assert np.all(var < 1e-6)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 30))
def test_matches_dense_inverse(seed, n):
    rng = np.random.default_rng(seed)
    kern = KernelSpec(rng.uniform(0.1, 1), rng.uniform(0.5, 2), rng.uniform(1e-3, 0.1))
    x, y, xq = rng.uniform(size=(n, 2)), rng.normal(size=n), rng.uniform(size=(5, 2))
    kinv = np.linalg.inv(kern(x, x) + (kern.noise_variance + 1e-10) * np.eye(n))
    ks = kern(xq, x)
    mean, var = gp_predict(gp_fit(x, y, kern), xq)
    np.testing.assert_allclose(mean, ks @ kinv @ y, atol=1e-8)
    np.testing.assert_allclose(var, np.maximum(kern.variance - np.sum(ks @ kinv * ks, axis=1), 0), atol=1e-8)


def test_fit_errors():
    with pytest.raises(ValueError):
        gp_fit([0.1, 0.2], [1.0], KernelSpec())
    with pytest.raises(GPFactorizationError):
        gp_fit([0.1, 0.1], [1.0, 2.0], KernelSpec(1.0, 1e12))


def test_level_set_from_boundary_and_error():
    est = LevelSetEstimate.from_boundary(np.array([0.3, 0.6]), (3, 2))
    # rows at x2 = 0, 0.5, 1
    np.testing.assert_array_equal(est.classification, [[True, True], [False, True], [False, False]])
    truth = LevelSetEstimate(np.ones((3, 2), bool))
    assert level_set_error(truth, est) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        level_set_error(truth, LevelSetEstimate(np.ones((2, 2), bool)))
    with pytest.raises(ValueError):
        LevelSetEstimate.from_boundary(np.zeros(3), (3, 2))
    np.testing.assert_array_equal(LevelSetEstimate.from_values(np.array([[1, -1]]), 0).classification, [[True, False]])


def test_axes():
    np.testing.assert_allclose(grid_axis(3), [0, 0.5, 1])
    np.testing.assert_allclose(transect_coordinates(5), [0, 0.25, 0.5, 0.75, 1])


def linear_field(x1, x2):
    return 0.3 + 0.2 * x1 - x2


def test_transect_lse_on_known_boundary():
    res = transect_lse(linear_field, NoiseModel(threshold=0.0), 4, 0.002, 0.5, KernelSpec(1.0, 0.04), (21, 20))
    for run in res.transects:
        assert run.estimate == pytest.approx(0.3 + 0.2 * run.coordinate, abs=0.01)
    np.testing.assert_allclose(res.predict_boundary([0.0, 0.5, 1.0]), [0.3, 0.4, 0.5], atol=0.02)
    assert res.path[0] == (0.0, 0.0)
    assert res.samples == sum(r.trace.sample_count for r in res.transects) == len(res.path) - 1
    assert len(res.hops) == 3
    assert res.path_length((2.0, 1.0)) > res.total_distance
    assert not res.timed_out
    # later transects start from an earlier reading so they need fewer samples
    assert res.transects[1].initial_length < 1.0


def test_transect_lse_errors():
    with pytest.raises(ValueError):
        transect_lse(linear_field, NoiseModel(threshold=0.0), 1, 0.01, 0.5, KernelSpec(), (5, 5))
    with pytest.raises(ValueError):
        transect_lse(linear_field, NoiseModel(threshold=0.0), 3, 0.0, 0.5, KernelSpec(), (5, 5))
