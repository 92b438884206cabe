import json
import subprocess
import sys

import pytest

CLI = [sys.executable, "-m", "centered_td.cli"]


def run_cli(*args, **kwargs):
    return subprocess.run(
        CLI + list(args), capture_output=True, text=True, timeout=600, **kwargs
    )


def write_config(path, **overrides):
    data = {
        "environment": "two-state",
        "algorithm": "ctd",
        "sizes": {"alpha": 0.01, "beta": 0.05},
        "steps_per_run": 100,
        "n_runs": 2,
        "record_every": 10,
        "seed": 42,
    }
    data.update(overrides)
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# fixpoint


def test_fixpoint_two_state():
    proc = run_cli("fixpoint", "two-state")
    assert proc.returncode == 0
    payload = json.loads(proc.stdout)
    assert abs(payload["a_matrix"][0][0] - 0.25) <= 1e-12
    assert payload["b_vector"] == [0.0]
    assert payload["theta_star"] == [0.0]
    assert payload["singular"] is False
    assert payload["d_mu"] == [0.5, 0.5]


def test_fixpoint_baird():
    proc = run_cli("fixpoint", "baird7")
    assert proc.returncode == 0
    payload = json.loads(proc.stdout)
    assert payload["singular"] is True
    assert payload["b_vector"] == [0.0] * 8


def test_fixpoint_boyan_residual():
    proc = run_cli("fixpoint", "boyan")
    payload = json.loads(proc.stdout)
    assert payload["residual"] <= 1e-8
    assert payload["singular"] is True  # features span constants
    assert payload["min_eigenvalue_symmetrized_a"] >= -1e-10


def test_fixpoint_unknown_environment_exit_2():
    proc = run_cli("fixpoint", "gridworld")
    assert proc.returncode == 2
    assert "environment" in proc.stderr


def test_fixpoint_runtime_failure_exit_1(tmp_path):
    config = write_config(
        tmp_path / "c.json",
        environment={
            "name": "disconnected",
            "n_states": 2,
            "p_behavior": [[1.0, 0.0], [0.0, 1.0]],
            "p_target": [[1.0, 0.0], [0.0, 1.0]],
            "rewards": [[0.0, 0.0], [0.0, 0.0]],
            "gamma": 0.9,
            "features": [[1.0], [2.0]],
        },
    )
    proc = run_cli("fixpoint", str(config))
    assert proc.returncode == 1
    assert "stationary" in proc.stderr


# ---------------------------------------------------------------------------
# run


def test_run_csv_schema_and_determinism(tmp_path):
    config = write_config(tmp_path / "c.json")
    first = run_cli("run", "--config", str(config))
    second = run_cli("run", "--config", str(config))
    assert first.returncode == 0
    assert first.stdout == second.stdout  # byte-identical
    lines = first.stdout.strip().split("\n")
    assert lines[0] == "step,run,rmscbe,theta_norm,diverged"
    assert len(lines) == 1 + 2 * 10  # n_runs * (steps / record_every)
    fields = lines[1].split(",")
    assert fields[0] == "10" and fields[1] == "0" and fields[4] in ("0", "1")
    assert float(fields[2]) >= 0
    # 17 significant digits round-trip doubles exactly
    assert "%.17g" % float(fields[2]) == fields[2]


def test_run_out_file(tmp_path):
    config = write_config(tmp_path / "c.json")
    out = tmp_path / "trace.csv"
    proc = run_cli("run", "--config", str(config), "--out", str(out))
    assert proc.returncode == 0
    assert out.read_text(encoding="utf-8").startswith("step,run,")


def test_run_unknown_algorithm_exit_2(tmp_path):
    config = write_config(tmp_path / "c.json", algorithm="sarsa")
    proc = run_cli("run", "--config", str(config))
    assert proc.returncode == 2
    assert "algorithm" in proc.stderr


def test_run_unknown_key_exit_2(tmp_path):
    config = write_config(tmp_path / "c.json")
    raw = json.loads(config.read_text())
    raw["verbose"] = True
    config.write_text(json.dumps(raw))
    proc = run_cli("run", "--config", str(config))
    assert proc.returncode == 2
    assert "verbose" in proc.stderr


def test_run_invalid_json_names_line(tmp_path):
    config = tmp_path / "broken.json"
    config.write_text('{"environment": "two-state",\n  "algorithm": }')
    proc = run_cli("run", "--config", str(config))
    assert proc.returncode == 2
    assert "line 2" in proc.stderr


def test_seed_override_changes_output(tmp_path):
    config = write_config(tmp_path / "c.json")
    base = run_cli("run", "--config", str(config))
    overridden = run_cli("--seed", "7", "run", "--config", str(config))
    assert overridden.returncode == 0
    assert base.stdout != overridden.stdout


# ---------------------------------------------------------------------------
# sweep


def test_sweep_outputs_and_thread_invariance(tmp_path):
    config = write_config(
        tmp_path / "c.json", grids={"alpha": [0.005, 0.01], "beta": [0.05, 0.1]}
    )
    out1 = tmp_path / "s1"
    out2 = tmp_path / "s2"
    p1 = run_cli("--out-dir", str(out1), "sweep", "--config", str(config))
    p2 = run_cli("--out-dir", str(out2), "--threads", "3", "sweep", "--config", str(config))
    assert p1.returncode == 0 and p2.returncode == 0
    files1 = sorted(f.name for f in out1.iterdir())
    files2 = sorted(f.name for f in out2.iterdir())
    assert files1 == files2
    assert len([f for f in files1 if f.startswith("cell_")]) == 4
    for name in files1:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    summary = json.loads((out1 / "summary.json").read_text())
    assert summary["environment"] == "two-state"
    assert len(summary["cells"]) == 4
    assert summary["best"] in summary["cells"]
    cell_file = out1 / summary["best"]["file"]
    lines = cell_file.read_text().strip().split("\n")
    assert lines[0] == "step,mean_rmscbe,std_rmscbe,n_diverged"
    assert len(lines) == 11


def test_sweep_singleton_grid(tmp_path):
    config = write_config(tmp_path / "c.json", grids={"alpha": [0.01], "beta": [0.05]})
    out = tmp_path / "s"
    proc = run_cli("--out-dir", str(out), "sweep", "--config", str(config))
    assert proc.returncode == 0
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["cells"]) == 1
    assert summary["best"] == summary["cells"][0]


def test_sweep_empty_alpha_grid_exit_2(tmp_path):
    config = write_config(tmp_path / "c.json", grids={"alpha": [], "beta": [0.05]})
    proc = run_cli("--out-dir", str(tmp_path / "s"), "sweep", "--config", str(config))
    assert proc.returncode == 2
    assert "alpha" in proc.stderr
    assert not (tmp_path / "s" / "summary.json").exists()


def test_sweep_without_grids_exit_2(tmp_path):
    config = write_config(tmp_path / "c.json")
    proc = run_cli("--out-dir", str(tmp_path / "s"), "sweep", "--config", str(config))
    assert proc.returncode == 2


def test_sweep_fully_diverged_cell_serializes_as_null(tmp_path):
    config = write_config(
        tmp_path / "c.json",
        environment="baird7",
        algorithm="td",
        sizes={"alpha": 0.9},
        steps_per_run=300,
        n_runs=3,
        record_every=100,
        theta_init=[1, 1, 1, 1, 1, 1, 1, 10],
        grids={"alpha": [0.9]},
    )
    out = tmp_path / "s"
    proc = run_cli("--out-dir", str(out), "sweep", "--config", str(config))
    assert proc.returncode == 0, proc.stderr
    summary = json.loads((out / "summary.json").read_text())  # must be valid JSON
    assert summary["best"] is None
    assert summary["cells"][0]["final_mean_rmscbe"] is None
    assert summary["cells"][0]["n_diverged_final"] == 3


# ---------------------------------------------------------------------------
# lemma


def test_lemma_defaults():
    proc = run_cli("lemma")
    assert proc.returncode == 0
    payload = json.loads(proc.stdout)
    assert abs(payload["closed_form"] - 0.25) <= 1e-12
    assert abs(payload["matrix_form"] - 0.25) <= 1e-12
    assert payload["abs_difference"] <= 1e-12
    assert payload["verdict"] == "positive"


def test_lemma_explicit_parameters():
    proc = run_cli("lemma", "0.3", "0.7", "0.2", "0.9", "1.0", "-2.0", "0.99")
    payload = json.loads(proc.stdout)
    assert payload["verdict"] == "positive"
    assert payload["abs_difference"] <= 1e-12


def test_lemma_degenerate_features():
    proc = run_cli("lemma", "0.5", "0.5", "0.0", "0.0", "1.5", "1.5", "0.9")
    payload = json.loads(proc.stdout)
    assert payload["verdict"] == "degenerate (m=n)"
    assert payload["closed_form"] == 0.0


def test_lemma_grid():
    proc = run_cli("--seed", "5", "lemma", "--grid", "1000")
    payload = json.loads(proc.stdout)
    assert payload["min_value"] > 0
    assert payload["max_abs_difference"] <= 1e-10
    assert payload["all_positive"] is True


def test_lemma_rejects_wrong_arity():
    proc = run_cli("lemma", "0.5", "0.5")
    assert proc.returncode == 2


def test_lemma_rejects_bad_chain():
    proc = run_cli("lemma", "1.0", "0.0", "0.5", "0.5", "1.0", "2.0", "0.9")
    assert proc.returncode == 2


# ---------------------------------------------------------------------------
# report


@pytest.fixture(scope="module")
def baird_sweeps(tmp_path_factory):
    """Small td and ctdc sweeps on the 7-state counterexample."""
    root = tmp_path_factory.mktemp("sweeps")
    base = {
        "environment": "baird7",
        "steps_per_run": 500,
        "n_runs": 10,
        "record_every": 10,
        "seed": 11,
        "theta_init": [1, 1, 1, 1, 1, 1, 1, 10],
    }
    td_cfg = dict(base, algorithm="td", sizes={"alpha": 0.01}, grids={"alpha": [0.01]})
    ctdc_cfg = dict(
        base,
        algorithm="ctdc",
        sizes={"alpha": 0.01, "beta": 0.1, "zeta": 0.05},
        grids={"alpha": [0.01], "beta": [0.1], "zeta": [0.05]},
    )
    paths = {}
    for name, cfg in (("td", td_cfg), ("ctdc", ctdc_cfg)):
        cfg_path = root / f"{name}.json"
        cfg_path.write_text(json.dumps(cfg))
        out = root / f"sweep_{name}"
        proc = run_cli("--out-dir", str(out), "sweep", "--config", str(cfg_path))
        assert proc.returncode == 0, proc.stderr
        paths[name] = out
    return paths


def test_report_generates_curves_and_tidy_csv(tmp_path, baird_sweeps):
    out = tmp_path / "report"
    proc = run_cli(
        "--out-dir", str(out), "report", str(baird_sweeps["td"]), str(baird_sweeps["ctdc"])
    )
    assert proc.returncode == 0, proc.stderr
    svg = out / "report_baird7.svg"
    assert svg.is_file()
    assert b"<svg" in svg.read_bytes()
    tidy = (out / "report_data.csv").read_text().strip().split("\n")
    assert tidy[0] == "environment,algorithm,alpha,beta,zeta,step,mean_rmscbe,std_rmscbe,n_diverged"
    algos = {line.split(",")[1] for line in tidy[1:]}
    assert algos == {"td", "ctdc"}
    # terminal mean of the diverging baseline sits above the centered learner's
    finals = {}
    for line in tidy[1:]:
        parts = line.split(",")
        finals[parts[1]] = float(parts[6])
    assert finals["td"] > finals["ctdc"]


def test_report_deterministic_bytes(tmp_path, baird_sweeps):
    out1 = tmp_path / "r1"
    out2 = tmp_path / "r2"
    for out in (out1, out2):
        proc = run_cli("--out-dir", str(out), "report", str(baird_sweeps["td"]))
        assert proc.returncode == 0
    assert (out1 / "report_baird7.svg").read_bytes() == (out2 / "report_baird7.svg").read_bytes()
    assert (out1 / "report_data.csv").read_bytes() == (out2 / "report_data.csv").read_bytes()


def test_report_missing_cells_listed_but_continues(tmp_path, baird_sweeps):
    out = tmp_path / "r"
    proc = run_cli(
        "--out-dir", str(out), "report", str(baird_sweeps["td"]), str(tmp_path / "nowhere")
    )
    assert proc.returncode == 0
    assert "missing" in proc.stderr
    assert (out / "report_baird7.svg").is_file()
