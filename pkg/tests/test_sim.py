import dataclasses

import numpy as np
import pytest

from fhsearch.gp import KernelSpec
from fhsearch.policy import PolicyDomainError, compute_policy, expected_interval_length, xi
from fhsearch.sim import (
    REPORT_COLUMNS,
    CostReport,
    FieldGenerationError,
    FlipStep,
    GaussianStep,
    GridField,
    GridFormatError,
    SweepParams,
    TrialRecord,
    generate_gp_field,
    load_grid_field,
    qs_policy,
    run_gplse,
    run_sweep,
    save_grid_field,
    theta_grid,
    time_cost,
)


def test_theta_grid_excludes_endpoints():
    np.testing.assert_allclose(theta_grid(4), [0.2, 0.4, 0.6, 0.8])


def test_oracles():
    rng = np.random.default_rng(0)
    f = FlipStep(0.5, 0.2, rng)
    flips = np.mean([f(0.2) == 0 for _ in range(20_000)])
    assert flips == pytest.approx(0.2, abs=0.01)
    with pytest.raises(ValueError):
        FlipStep(0.5, 0.5, rng)
    g = GaussianStep(0.5, 0.1, rng)
    assert np.mean([g(0.7) for _ in range(5000)]) == pytest.approx(0.0, abs=0.01)


def test_bisection_sweep_uses_ten_samples():
    rep = run_sweep("fhs", theta_grid(20), 3, SweepParams(lam=0.0, stop_error=2.0**-10))
    assert set(rep.column("samples")) == {10}
    assert rep.mean("error") == 2.0**-10


def test_sweep_mean_interval_matches_analytic():
    pol = compute_policy(5, 0.9)
    rep = run_sweep("fhs", theta_grid(2000), 1, SweepParams(lam=0.9, n_samples=5))
    err = rep.column("error")
    assert abs(err.mean() - expected_interval_length(pol)) < 3 * err.std(ddof=1) / np.sqrt(err.size)


@pytest.mark.parametrize("noise", [{}, {"flip_prob": 0.1}])
def test_quantile_search_with_m2_matches_bisection(noise):
    base = dict(stop_error=0.01, seed=3, grid_size=1000, **noise)
    algo_q, algo_f = ("pqs", "pfhs") if noise else ("qs", "fhs")
    q = run_sweep(algo_q, theta_grid(10), 4, SweepParams(m=2.0, **base))
    f = run_sweep(algo_f, theta_grid(10), 4, SweepParams(lam=0.0, **base))
    for a, b in zip(q.records, f.records):
        assert dataclasses.replace(a, algo=b.algo) == b


def test_qs_policy():
    assert qs_policy(2.0).fraction(7) == 0.5
    lam = 0.8
    m = 1.0 / (0.5 - lam / 4)
    p = qs_policy(m, 3)
    assert p.fractions == pytest.approx(compute_policy(1, lam).fractions * 3)
    assert p.lam == pytest.approx(lam)
    assert float(xi(qs_policy(4.0).fraction(1))) == pytest.approx(0.625)
    for bad in (1.0, 0.5, 1.5):
        with pytest.raises(PolicyDomainError):
            qs_policy(bad)


def test_time_cost():
    assert time_cost((10, 1.5), 100, 0) == 1000
    assert time_cost((0, 0.0), 8, 3) == 0
    rec = TrialRecord("fhs", 0.5, 0.0, 0.0, 4, 2.0, 0.1, 0.1, 0.0)
    assert time_cost(rec, 1.0, 2.0) == 8.0
    with pytest.raises(ValueError):
        time_cost((1, 1), -1, 0)


def test_sweep_params_and_errors():
    with pytest.raises(ValueError):
        SweepParams()
    with pytest.raises(ValueError):
        SweepParams(stop_error=0.1, n_samples=3)
    with pytest.raises(ValueError):
        SweepParams(stop_error=0.1, flip_prob=0.1, sigma=0.1)
    with pytest.raises(ValueError, match="unknown algorithm"):
        run_sweep("utb", [0.5], 1, SweepParams(stop_error=0.1))


def test_sweep_reproducible_and_thread_independent(tmp_path):
    params = SweepParams(lam=0.5, stop_error=0.02, flip_prob=0.1, grid_size=500, seed=9)
    one = run_sweep("pfhs", theta_grid(4), 3, params)
    again = run_sweep("pfhs", theta_grid(4), 3, params)
    two = run_sweep("pfhs", theta_grid(4), 3, dataclasses.replace(params, threads=2))
    assert one.to_csv() == again.to_csv() == two.to_csv()
    path, summary = one.write(tmp_path / "report.csv")
    assert path.read_text().splitlines()[0] == ",".join(REPORT_COLUMNS)
    assert len(path.read_text().splitlines()) == 13
    assert summary.name == "report_summary.csv"
    assert summary.read_text().startswith("trials,samples_mean")


def test_gaussian_noise_sweep_runs():
    params = SweepParams(lam=0.5, stop_error=0.02, sigma=0.3, grid_size=500)
    for algo in ("fhs", "pfhs"):
        rep = run_sweep(algo, theta_grid(3), 2, params)
        assert rep.summary()["trials"] == 6
        assert np.all(rep.column("noise") == 0.3)


def test_cost_report_stats():
    recs = [TrialRecord("fhs", 0.5, 0.0, 0.0, n, 1.0, 0.1, 0.1, 0.0) for n in (2, 4)]
    rep = CostReport(recs)
    assert rep.mean("samples") == 3
    assert rep.stderr("samples") == pytest.approx(1.0)
    assert CostReport(recs[:1]).stderr("samples") == 0.0


def test_grid_round_trip(tmp_path):
    grid = GridField(np.array([[1.5, -2.0], [0.25, 3.0]]), gamma=0.5, sigma=0.1, cell_km=2.0)
    save_grid_field(grid, tmp_path / "g.csv")
    back = load_grid_field(tmp_path / "g.csv")
    np.testing.assert_array_equal(back.values, grid.values)
    assert (back.gamma, back.sigma, back.cell_km) == (0.5, 0.1, 2.0)
    assert load_grid_field(tmp_path / "g.csv", {"sigma": 0.3}).sigma == 0.3


def test_constant_field_is_all_super_level():
    grid = GridField(np.full((3, 4), 5.0), gamma=1.0)
    assert grid.truth().classification.all()


def test_bilinear_value():
    grid = GridField(np.array([[0.0, 1.0], [2.0, 3.0]]))
    assert grid.value(0.5, 0.5) == 1.5
    assert grid.value(1.0, 0.0) == 1.0
    assert grid.value(0.0, 1.0) == 2.0
    assert grid.scale_km == (1.0, 1.0)


@pytest.mark.parametrize("text,where", [
    ("", "empty"),
    ("2,2,1,0\n1,2\n3,4\n", "line 1"),
    ("2,2,1,0,0\n1,2\n3\n", "line 3"),
    ("2,2,1,0,0\n1,x\n3,4\n", "line 2, column 2"),
    ("2,2,1,0,0\n1,2\n", "expected 2 data rows"),
    ("2,2,1,0,-1\n1,2\n3,4\n", "sigma"),
])
def test_grid_format_errors(tmp_path, text, where):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(GridFormatError, match=where):
        load_grid_field(p)


def test_generated_field_deterministic_and_tracks_boundary():
    kern = KernelSpec(0.6, 0.04)
    g1, b1 = generate_gp_field(kern, field_noise=1e-8, seed=4)
    g2, b2 = generate_gp_field(kern, field_noise=1e-8, seed=4)
    np.testing.assert_array_equal(g1.values, g2.values)
    assert g1.grid_dims == (21, 20)
    assert 0 < b1.x2.min() and b1.x2.max() < 1
    rows, cols = g1.grid_dims
    x1 = np.linspace(0, 1, cols)
    x2 = np.linspace(0, 1, rows)
    for j in range(cols):
        col = g1.values[:, j]
        i = int(np.argmax(col < 0))
        crossing = x2[i - 1] + col[i - 1] / (col[i - 1] - col[i]) * (x2[i] - x2[i - 1])
        assert abs(crossing - b1(x1[j])) <= 1.0 / (rows - 1)


def test_field_generation_gives_up():
    with pytest.raises(FieldGenerationError):
        generate_gp_field(KernelSpec(0.6, 25.0), max_retries=2)


def test_run_gplse_outcome():
    kern = KernelSpec(0.6, 0.04)
    grid, _ = generate_gp_field(kern, seed=1)
    grid.sigma = 0.1
    res, out = run_gplse(grid, 4, 0.03, 0.5, kern, seed=0)
    res2, out2 = run_gplse(grid, 4, 0.03, 0.5, kern, seed=0)
    assert res.path == res2.path
    assert out.samples == res.samples and 0 <= out.error < 0.2
    assert out.distance_km == pytest.approx(res.path_length((19.0, 20.0)))
