import json
from pathlib import Path

import numpy as np
import pytest

from fiberplast import __version__
from fiberplast.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, OUT_ENV, main
from fiberplast.config import parse_config
from fiberplast.fibers import read_graph

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def _small(**over):
    raw = {"eps": 0.125, "time": {"T": 1.0, "steps": 4}, "stability": {"competitors": 20}, "yield_stress": 0.05}
    raw.update(over)
    return raw


def _data(path):
    return np.loadtxt(path, delimiter=",", comments="#", skiprows=3, ndmin=2)


def test_simulate_zero_load(tmp_path):
    cfg = _write(tmp_path, _small(load={"scaling": "zero"}))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    data = _data(tmp_path / "o" / "trajectory.csv")
    assert data.shape[0] == 5
    assert not np.any(data[:, 1:])
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["status"] == "ok" and rep["failures"] == []


def test_simulate_outputs_are_reproducible_and_headed(tmp_path):
    cfg = _write(tmp_path, _small())
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / d)]) == EXIT_OK
    a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    assert a == (tmp_path / "b" / "trajectory.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0] == f"# fiberplast {__version__}"
    assert lines[1] == f"# config_sha256 {parse_config(cfg).hash}"
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["config_sha256"] == parse_config(cfg).hash
    assert rep["balance_relative"] < 0.05


def test_seed_override_changes_graph(tmp_path):
    cfg = _write(tmp_path, _small())
    main(["fibers", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["fibers", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "7"])
    ga, gb = read_graph(tmp_path / "a" / "graph.txt"), read_graph(tmp_path / "b" / "graph.txt")
    assert not np.array_equal(ga.edges, gb.edges) or ga.num_edges != gb.num_edges


def test_fibers_outputs(tmp_path):
    cfg = _write(tmp_path, _small(d=2, s=0.5, eps=0.125))
    out = tmp_path / "o"
    assert main(["fibers", "--config", cfg, "--out", str(out), "--threads", "2"]) == EXIT_OK
    g = read_graph(out / "graph.txt")
    meta = json.loads((out / "fibers.json").read_text())
    assert meta["num_edges"] == g.num_edges
    deg = _data(out / "degree_histogram.csv")
    assert deg[:, 1].sum() == g.lattice.num_nodes
    assert (deg[:, 0] * deg[:, 1]).sum() == 2 * g.num_edges
    assert _data(out / "length_histogram.csv")[:, 1].sum() == g.num_edges
    # the thread count does not change the sample
    main(["fibers", "--config", cfg, "--out", str(tmp_path / "one")])
    assert (tmp_path / "one" / "graph.txt").read_bytes() == (out / "graph.txt").read_bytes()


def test_output_dir_precedence(tmp_path, monkeypatch):
    env_dir, cfg_dir = tmp_path / "env", tmp_path / "cfgdir"
    cfg = _write(tmp_path, _small(output_dir=str(cfg_dir)))
    assert main(["fibers", "--config", cfg]) == EXIT_OK
    assert (cfg_dir / "graph.txt").exists()
    monkeypatch.setenv(OUT_ENV, str(env_dir))
    main(["fibers", "--config", cfg])
    assert (env_dir / "graph.txt").exists()
    main(["fibers", "--config", cfg, "--out", str(tmp_path / "flag")])
    assert (tmp_path / "flag" / "graph.txt").exists()


def test_configuration_errors_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, {"bogus": 1, "d": 2, "s": 0.8, "p": 3.0})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["status"] == "configuration_error"
    assert "bogus: unknown field" in err["errors"]
    assert main(["verify", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
    assert main(["simulate", "--config", _write(tmp_path, _small(), "ok.json"), "--threads", "0"]) == EXIT_CONFIG


def test_solver_failure_exit_3(tmp_path, capsys):
    cfg = _write(tmp_path, _small(p=3.0, solver={"max_iter": 1, "tol": 1e-15}))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_SOLVER
    err = json.loads(capsys.readouterr().err)
    assert err["status"] == "solver_failure" and "step" in err


def test_unknown_suite_rejected(tmp_path):
    with pytest.raises(SystemExit):
        main(["verify", "--config", _write(tmp_path, _small()), "--suite", "nope"])


def test_verify_lindqvist_suite(tmp_path):
    cfg = _write(tmp_path, _small(verify={"trials": 50, "lindqvist_trials": 5000}))
    assert main(["verify", "--config", cfg, "--suite", "lindqvist", "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "inequalities.json").read_text())
    assert doc["failed"] == []
    assert {r["name"] for r in doc["reports"]} == {"lindqvist_p2", "lindqvist_p3", "lindqvist_p4"}
    assert all(r["ok"] and not r["violations"] for r in doc["reports"])


def test_verify_all_suites_small(tmp_path):
    cfg = _write(tmp_path, _small(verify={"trials": 60, "lindqvist_trials": 2000}))
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "inequalities.json").read_text())
    assert not doc["failed"] and len(doc["reports"]) >= 7


def test_converge_on_study_config(tmp_path):
    out = tmp_path / "o"
    assert main(["converge", "--config", str(CONFIGS / "study_1d.json"), "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "converge.json").read_text())
    assert doc["medians_decreasing"] and doc["monte_carlo_ok"]
    data = _data(out / "convergence.csv")
    assert set(data[:, 1]) == {0, 1, 2, 3, 4}
    for t in sorted(set(data[:, 2])):
        rows = data[data[:, 2] == t]
        med = [np.median(rows[rows[:, 0] == e][:, 3:7], axis=0) for e in (0.125, 0.0625, 0.03125)]
        assert np.all(med[0] > med[1]) and np.all(med[1] > med[2])
    mc = _data(out / "monte_carlo.csv")
    assert mc.shape == (3, 8)


@pytest.mark.parametrize("name", ["bar_1d.json", "plate_2d.json"])
def test_shipped_configs_simulate(tmp_path, name):
    assert main(["simulate", "--config", str(CONFIGS / name), "--out", str(tmp_path)]) == EXIT_OK
