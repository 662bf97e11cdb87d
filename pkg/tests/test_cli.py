import json
from pathlib import Path

import pytest

from swerexi.cli import EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK, main


def run_cli(*argv):
    return main(list(argv))


BASE = [
    "--trunc", "21",
    "--benchmark", "barotropic_instability",
    "--horizon-hours", "0.5",
]


def test_run_writes_artifacts(tmp_path):
    out = tmp_path / "run1"
    code = run_cli(
        "run", *BASE, "--stepper", "lg_irk_lc_n_erk_ver0", "--dt", "300",
        "--out", str(out),
    )
    assert code == EXIT_OK
    assert (out / "state.bin").exists()
    assert (out / "run.json").exists()
    assert (out / "timing.json").exists()
    assert (out / "config.json").exists()
    report = json.loads((out / "run.json").read_text())
    assert report["n_steps"] == 6 and not report["diverged"]


def test_run_divergence_exit_code_and_no_snapshot(tmp_path):
    out = tmp_path / "boom"
    code = run_cli(
        "run", "--trunc", "21", "--benchmark", "barotropic_instability",
        "--horizon-hours", "24", "--stepper", "ln_erk", "--dt", "3600",
        "--out", str(out),
    )
    assert code == EXIT_DIVERGENCE
    assert not (out / "state.bin").exists()
    report = json.loads((out / "run.json").read_text())
    assert report["diverged"] and report["blow_up_step"] >= 1


def test_run_is_bitwise_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = run_cli(
            "run", *BASE, "--stepper", "lg_rexi_lc_n_erk_ver1", "--dt", "600",
            "--out", str(out),
        )
        assert code == EXIT_OK
        outs.append(out)
    assert (outs[0] / "state.bin").read_bytes() == (outs[1] / "state.bin").read_bytes()
    assert (outs[0] / "run.json").read_text() == (outs[1] / "run.json").read_text()


def test_workers_do_not_change_numerical_artifacts(tmp_path):
    outs = {}
    for workers in ("1", "4"):
        out = tmp_path / f"w{workers}"
        code = run_cli(
            "run", *BASE, "--stepper", "lg_rexi_lc_n_erk_ver1", "--dt", "600",
            "--workers", workers, "--out", str(out),
        )
        assert code == EXIT_OK
        outs[workers] = out
    assert (outs["1"] / "state.bin").read_bytes() == (outs["4"] / "state.bin").read_bytes()
    # timing json is the designated non-deterministic artifact
    t1 = json.loads((outs["1"] / "timing.json").read_text())
    t4 = json.loads((outs["4"] / "timing.json").read_text())
    assert t1["K"] == 1 and t4["K"] == 4


def test_bad_stepper_id_is_config_error(tmp_path):
    code = run_cli(
        "run", *BASE, "--stepper", "lg_irk_lc_n_erk", "--dt", "300",
        "--out", str(tmp_path / "x"),
    )
    assert code == EXIT_CONFIG


def test_sweep_single_cell_table_and_figures(tmp_path):
    out = tmp_path / "sweep"
    code = run_cli(
        "sweep", *BASE, "--steppers", "lg_irk_lc_n_erk_ver0", "--dts", "600",
        "--ref-dt", "15", "--out", str(out),
    )
    assert code == EXIT_OK
    csv = (out / "error_vs_dt.csv").read_text().splitlines()
    assert csv[0] == "stepper_id,dt_seconds,linf_h_error_m,status,wallclock_s"
    assert len(csv) == 2
    assert csv[1].startswith("lg_irk_lc_n_erk_ver0,600,")
    assert (out / "error_vs_dt.png").exists()
    assert (out / "wallclock_vs_error.png").exists()
    # re-running overwrites idempotently (same rows except wallclock)
    first = csv[1].rsplit(",", 1)[0]
    assert run_cli(
        "sweep", *BASE, "--steppers", "lg_irk_lc_n_erk_ver0", "--dts", "600",
        "--ref-dt", "15", "--out", str(out),
    ) == EXIT_OK
    again = (out / "error_vs_dt.csv").read_text().splitlines()[1].rsplit(",", 1)[0]
    assert again == first


def test_config_file_precedence(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"dt": 600.0, "trunc": 21}))
    out = tmp_path / "cfgrun"
    code = run_cli(
        "run", "--config", str(cfg_file), "--benchmark", "barotropic_instability",
        "--horizon-hours", "0.5", "--stepper", "lg_irk_lc_n_erk_ver0",
        "--dt", "300", "--out", str(out),
    )
    assert code == EXIT_OK
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["dt"] == 300.0  # flag beats config file
    assert resolved["trunc"] == 21  # config file beats default
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"no_such_key": 1}))
    assert run_cli(
        "run", "--config", str(bad), "--out", str(tmp_path / "y")
    ) == EXIT_CONFIG


def test_breakdown_outputs(tmp_path):
    out = tmp_path / "bd"
    code = run_cli(
        "breakdown", *BASE, "--stepper", "lg_rexi_lc_n_erk_ver1", "--dt", "600",
        "--worker-counts", "1,2", "--ensembles", "2",
        "--steps", "3", "--out", str(out),
    )
    assert code == EXIT_OK
    summary = json.loads((out / "breakdown.json").read_text())
    assert set(summary) == {"1", "2"}
    for b in summary.values():
        assert b["broadcast"] + b["term_solves"] + b["reduce"] <= b["rexi_total"] * 1.05
        assert b["rexi_total"] <= b["overall"] * 1.05
    runs = json.loads((out / "timing_runs.json").read_text())
    assert len(runs) == 4  # 2 worker counts x 2 ensembles
    assert (out / "amdahl.csv").exists()
    assert (out / "breakdown.png").exists()
