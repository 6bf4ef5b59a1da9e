import json

import numpy as np
import pytest

from fhsearch.cli import RunConfig, UsageError, build_parser, main
from fhsearch.policy import compute_policy
from fhsearch.sim import noisy_cost_table, theta_grid


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def test_policy_n(tmp_path, capsys):
    code, out, _ = run(capsys, "policy", "--n", 20, "--lambda", 1.0, "--out", tmp_path)
    assert code == 0
    fr = read_csv(tmp_path / "policy.csv")["fraction"]
    assert len(fr) == 20 and fr[-1] == 0.25 and np.all(np.diff(fr) >= 0)
    assert "expected_cost=" in out
    assert json.loads((tmp_path / "manifest.json").read_text())["argv"][0] == "policy"


def test_policy_epsilon(tmp_path, capsys):
    run(capsys, "policy", "--epsilon", 0.01, "--lambda", 0, "--out", tmp_path / "a")
    np.testing.assert_array_equal(read_csv(tmp_path / "a" / "policy.csv")["fraction"], [0.5] * 7)
    run(capsys, "policy", "--epsilon", 0.01, "--lambda", 0.5, "--out", tmp_path / "b")
    fr = read_csv(tmp_path / "b" / "policy.csv")["fraction"]
    # forward oracle: first horizon whose expected length meets the target
    n = next(n for n in range(1, 100) if np.prod([z * z + (1 - z) ** 2 for z in compute_policy(n, 0.5).fractions]) <= 0.01)
    np.testing.assert_allclose(fr, compute_policy(n, 0.5).fractions, atol=1e-15)


@pytest.mark.parametrize("lam", ["2", "-0.5", "3"])
def test_bad_lambda_exit_code(tmp_path, capsys, lam):
    code, _, err = run(capsys, "policy", "--n", 3, "--lambda", lam, "--out", tmp_path)
    assert code == 2
    assert err.startswith("error:") and "[0, 2)" in err


def test_argparse_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["policy"])
    assert exc.value.code == 2


def test_search_writes_trace(tmp_path, capsys):
    code, out, _ = run(capsys, "search", "--theta", 0.3, "--algo", "pfhs", "--flip", 0.1, "--lambda", 0.5,
                       "--grid-size", 1000, "--out", tmp_path)
    assert code == 0 and "estimate=" in out
    assert (tmp_path / "trace.csv").read_text().startswith("step,x,y,label,a,b,estimate,cumulative_distance")
    assert (tmp_path / "posterior.csv").exists()
    code, _, err = run(capsys, "search", "--theta", 0.3, "--sigma", 0.2, "--out", tmp_path)
    assert code == 2 and err.startswith("error:")


def test_search_timeout_exit_three(tmp_path, capsys):
    code, _, err = run(capsys, "search", "--theta", 0.5, "--algo", "pfhs", "--sigma", 100.0, "--epsilon", 1e-6,
                       "--grid-size", 50, "--out", tmp_path)
    assert code == 3 and err.startswith("error: SearchTimeout")


def test_sweep_fast_bisection(tmp_path, capsys):
    code, out, _ = run(capsys, "sweep", "--algo", "fhs", "--lambda", 0, "--epsilon", 0.001, "--fast",
                       "--threads", 1, "--out", tmp_path)
    assert code == 0 and "mean samples = 10 " in out
    assert (tmp_path / "report_summary.csv").exists()
    code, _, err = run(capsys, "sweep", "--algo", "fhs", "--out", tmp_path)
    assert code == 2 and "--epsilon" in err


def test_select_lambda_noisy_regression(tmp_path, capsys):
    grid = [round(0.1 * k, 1) for k in range(11)]
    code, out, _ = run(capsys, "select-lambda", "--ts", 100, "--ratio", 250, "--epsilon", 0.01, "--noise", 0.1,
                       "--lambda-grid", *grid, "--thetas", 10, "--trials", 5, "--threads", 1, "--out", tmp_path)
    assert code == 0
    table = noisy_cost_table(grid, 0.01, 0.1, theta_grid(10), 5, seed=0, grid_size=1000)
    totals = {lam: 100 * n + 25_000 * d for lam, (n, d) in table.items()}
    best = min(sorted(totals), key=totals.get)
    assert best == 0.3
    assert out.startswith(f"lambda_star={best} ")
    rows = read_csv(tmp_path / "selection.csv")
    np.testing.assert_allclose(rows["time"], [totals[lam] for lam in grid])


def test_select_lambda_noiseless(tmp_path, capsys):
    code, out, _ = run(capsys, "select-lambda", "--ts", 1, "--tt", 0, "--out", tmp_path)
    assert code == 0 and out.startswith("lambda_star=0.0 ")


def test_genfield_gplse_and_replay(tmp_path, capsys):
    code, out, _ = run(capsys, "genfield", "--seed", 5, "--out", tmp_path / "f")
    assert code == 0 and "21x20" in out
    field = tmp_path / "f" / "field.csv"
    code, out, _ = run(capsys, "gplse", "--field", field, "--transects", 5, "--stop-error", 0.03,
                       "--out", tmp_path / "g")
    assert code == 0 and out.startswith("error=")
    assert "speed=32.0km/h" in out and "speed=65.0km/h" in out
    names = ["boundary_estimates.csv", "boundary_curve.csv", "classification.csv", "path.csv", "summary.csv"]
    code, _, _ = run(capsys, "replay", tmp_path / "g" / "manifest.json", "--out", tmp_path / "h")
    assert code == 0
    for name in names:
        assert (tmp_path / "g" / name).read_bytes() == (tmp_path / "h" / name).read_bytes()


def test_gplse_io_errors(tmp_path, capsys):
    code, _, err = run(capsys, "gplse", "--field", tmp_path / "missing.csv", "--out", tmp_path / "o")
    assert code == 3 and err.startswith("error:")
    bad = tmp_path / "bad.csv"
    bad.write_text("2,2,1,0,0\n1,2\n3\n")
    code, _, err = run(capsys, "gplse", "--field", bad, "--out", tmp_path / "o")
    assert code == 3 and "line 3" in err


def test_default_output_root(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("FHSEARCH_OUT", str(tmp_path))
    assert run(capsys, "policy", "--n", 2, "--lambda", 0.5)[0] == 0
    (made,) = tmp_path.iterdir()
    assert made.name.startswith("policy-") and (made / "policy.csv").exists()


def test_manifest_rejects_unknown_keys(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"subcommand": "policy", "argv": [], "colour": "red"}))
    with pytest.raises(UsageError, match="colour"):
        RunConfig.from_manifest(p)


def test_help_mentions_units():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, p in sub.choices.items():
        for action in p._actions:
            if action.dest in ("help", "manifest"):
                continue
            assert action.help, f"{name} {action.dest} lacks help"
    text = sub.choices["gplse"].format_help()
    assert "km/h" in text and "seconds" in text
