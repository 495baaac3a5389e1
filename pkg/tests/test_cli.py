"""End-to-end checks of the command-line interface.

Everything goes through ``main(argv)`` in-process so exit codes, stdout,
and written files can be asserted directly; one test shells out to confirm
the installed console script resolves.
"""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from catefuse.cli import _load_fused, main
from catefuse.data import save_csv
from catefuse.simgen import DGPConfig, generate
from catefuse.star import save_star_csv, synthetic_star_extract


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_draw_csv(path, n1=80, n0=40, seed=3, beta=0.2):
    draw = generate(DGPConfig(scenario="power", n1=n1, n0=n0,
                              beta=beta, seed=seed))
    save_csv(draw.data, path)
    return draw


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# option resolution
# ---------------------------------------------------------------------------


def test_simulate_rmse_writes_outputs(tmp_path, capsys):
    code, out, err = run_cli([
        "simulate-rmse", "--scenario", "power", "--learner", "ate",
        "--learner", "t", "--n1", "60", "--n0", "30", "--reps", "2",
        "--eval-n", "80", "--stage1", "linear", "--seed", "5",
        "--outdir", str(tmp_path)], capsys)
    assert code == 0, err
    rows = read_rows(tmp_path / "rmse_results.csv")
    assert len(rows) == 2 and {r["learner"] for r in rows} == {"ate", "t"}
    for row in rows:
        assert row["scenario"] == "power" and int(row["R"]) == 2
        assert np.isfinite(float(row["mean_rmse"]))
    resolved = json.loads((tmp_path / "resolved_config.json").read_text())
    assert resolved["command"] == "simulate-rmse"
    assert resolved["n1"] == 60 and resolved["stage1"] == "linear"
    assert f"wrote {tmp_path / 'rmse_results.csv'}" in out


def test_config_file_layering(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "scenarios": ["power"], "learners": ["ate"], "n1": 60,
        "n0_grid": [30], "reps": 1, "eval_n": 80, "stage1": "linear"}))
    code, _, err = run_cli([
        "simulate-rmse", "--config", str(cfg), "--reps", "2",
        "--outdir", str(tmp_path)], capsys)
    assert code == 0, err
    resolved = json.loads((tmp_path / "resolved_config.json").read_text())
    # config beats defaults, explicit flags beat config
    assert resolved["n1"] == 60
    assert resolved["reps"] == 2
    rows = read_rows(tmp_path / "rmse_results.csv")
    assert len(rows) == 1 and int(rows[0]["R"]) == 2


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n1": 60, "bogus": 1}))
    code, _, err = run_cli(
        ["simulate-rmse", "--config", str(cfg)], capsys)
    assert code == 2
    assert err.startswith("error[config]:") and "bogus" in err


def test_malformed_config_json(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    code, _, err = run_cli(
        ["simulate-rmse", "--config", str(cfg)], capsys)
    assert code == 2 and err.startswith("error[config]:")


@pytest.mark.parametrize("payload", [
    {"n1": "sixty"},          # uncoercible type
    {"n1": True},             # bool is not an int
    {"reps": 0},              # rejected by the experiment spec
    {"learners": ["nope"]},   # not a learner name
])
def test_bad_config_values_exit_2(tmp_path, capsys, payload):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(payload))
    code, _, err = run_cli(
        ["simulate-rmse", "--config", str(cfg)], capsys)
    assert code == 2 and err.startswith("error[config]:")


def test_env_outdir_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CATEFUSE_OUTDIR", str(tmp_path / "from_env"))
    train = tmp_path / "train.csv"
    write_draw_csv(train)
    code, _, err = run_cli(
        ["fit", "--learner", "ate", "--train", str(train)], capsys)
    assert code == 0, err
    assert (tmp_path / "from_env" / "predictions.csv").exists()
    assert (tmp_path / "from_env" / "resolved_config.json").exists()


def test_missing_subcommand_usage_error(capsys):
    assert run_cli([], capsys)[0] == 2


def test_help_exits_zero(capsys):
    assert run_cli(["--help"], capsys)[0] == 0


def test_unknown_flag_value_usage_error(capsys):
    # argparse choices failure surfaces as the usual exit code 2
    code, _, err = run_cli(["fit", "--learner", "nope", "--train", "x.csv"],
                           capsys)
    assert code == 2


# ---------------------------------------------------------------------------
# fit / transport-test on fused CSVs
# ---------------------------------------------------------------------------


def test_fit_writes_predictions(tmp_path, capsys):
    train = tmp_path / "train.csv"
    test = tmp_path / "test.csv"
    write_draw_csv(train, n1=80, n0=40, seed=3)
    write_draw_csv(test, n1=20, n0=0, seed=4)
    code, _, err = run_cli([
        "fit", "--learner", "ate", "--train", str(train),
        "--test", str(test), "--outdir", str(tmp_path)], capsys)
    assert code == 0, err
    rows = read_rows(tmp_path / "predictions.csv")
    assert len(rows) == 20
    values = {float(r["tau_hat"]) for r in rows}
    assert len(values) == 1  # difference in means is constant in x
    assert list(rows[0]) == [f"x{j}" for j in range(5)] + ["tau_hat"]


def test_fit_without_test_predicts_train(tmp_path, capsys):
    train = tmp_path / "train.csv"
    write_draw_csv(train, n1=50, n0=25, seed=6)
    code, _, err = run_cli([
        "fit", "--learner", "ate", "--train", str(train),
        "--outdir", str(tmp_path)], capsys)
    assert code == 0, err
    assert len(read_rows(tmp_path / "predictions.csv")) == 75


def test_fit_missing_file_exit_3(tmp_path, capsys):
    code, _, err = run_cli([
        "fit", "--learner", "ate", "--train", str(tmp_path / "nope.csv"),
        "--outdir", str(tmp_path)], capsys)
    assert code == 3 and err.startswith("error[input]:")


def test_fit_missing_column_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x0,s,a,e\n0.1,1,0,0.5\n")
    code, _, err = run_cli([
        "fit", "--learner", "ate", "--train", str(bad),
        "--outdir", str(tmp_path)], capsys)
    assert code == 3
    assert err.startswith("error[input]:") and "'y'" in err


def test_fit_runtime_failure_exit_1(tmp_path, capsys):
    # single-arm trial: difference in means cannot be formed
    train = tmp_path / "train.csv"
    draw = write_draw_csv(train, n1=40, n0=0, seed=8)
    data = draw.data
    rows = ["x0,x1,x2,x3,x4,s,a,y,e"]
    for i in range(data.n):
        rows.append(",".join([repr(float(v)) for v in data.x[i]]
                             + ["1", "1", repr(float(data.y[i])), "0.5"]))
    train.write_text("\n".join(rows) + "\n")
    code, _, err = run_cli([
        "fit", "--learner", "ate", "--train", str(train),
        "--outdir", str(tmp_path)], capsys)
    assert code == 1 and err.startswith("error[runtime]:")


def test_transport_test_emits_json(tmp_path, capsys):
    data_path = tmp_path / "fused.csv"
    write_draw_csv(data_path, n1=400, n0=400, seed=9, beta=0.0)
    code, out, err = run_cli([
        "transport-test", "--input", str(data_path),
        "--outdir", str(tmp_path)], capsys)
    assert code == 0, err
    line = next(l for l in out.splitlines() if l.startswith("{"))
    payload = json.loads(line)
    assert payload["method"] == "transportability"
    assert 0.0 <= payload["p_value"] <= 1.0
    assert payload["rejected"] == (payload["p_value"] < 0.05)
    assert payload["ci_lo"] <= payload["estimate"] <= payload["ci_hi"]


def test_transport_test_requires_input(capsys):
    code, _, err = run_cli(["transport-test"], capsys)
    assert code == 2 and "'input'" in err


# ---------------------------------------------------------------------------
# student-data subcommands
# ---------------------------------------------------------------------------


def test_star_prep_outputs_round_trip(tmp_path, capsys):
    raw_path = tmp_path / "raw.csv"
    save_star_csv(synthetic_star_extract(40, 20, seed=11), raw_path)
    out = tmp_path / "out"
    code, _, err = run_cli([
        "star-prep", "--input", str(raw_path), "--seed", "2",
        "--outdir", str(out)], capsys)
    assert code == 0, err
    trial = _load_fused(out / "star_trial.csv")
    external = _load_fused(out / "star_external.csv")
    assert np.all(trial.s == 1) and np.all(external.s == 0)
    assert np.all(trial.e == 0.5)
    assert trial.n == 20  # half of the rural rows
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert isinstance(resolved["n_removed"], int)
    assert len(resolved["feature_names"]) == trial.d


def test_star_prep_output_feeds_fit(tmp_path, capsys):
    raw_path = tmp_path / "raw.csv"
    save_star_csv(synthetic_star_extract(60, 30, seed=12), raw_path)
    code, _, err = run_cli([
        "star-prep", "--input", str(raw_path), "--outdir", str(tmp_path)],
        capsys)
    assert code == 0, err
    code, _, err = run_cli([
        "fit", "--learner", "t", "--stage1", "linear",
        "--train", str(tmp_path / "star_trial.csv"),
        "--outdir", str(tmp_path)], capsys)
    assert code == 0, err
    assert (tmp_path / "predictions.csv").exists()


def test_star_prep_missing_input_exit_3(tmp_path, capsys):
    code, _, err = run_cli([
        "star-prep", "--input", str(tmp_path / "nope.csv"),
        "--outdir", str(tmp_path)], capsys)
    assert code == 3 and err.startswith("error[input]:")


def test_star_eval_synthetic_smoke(tmp_path, capsys):
    code, _, err = run_cli([
        "star-eval", "--synthetic", "--rural", "160", "--urban", "80",
        "--learner", "ate", "--learner", "t", "--stage1", "linear",
        "--n1", "40", "--n0", "30", "--reps", "2", "--seed", "4",
        "--outdir", str(tmp_path)], capsys)
    assert code == 0, err
    rows = read_rows(tmp_path / "star_results.csv")
    assert {r["learner"] for r in rows} == {"ate", "t"}
    assert all(int(r["R"]) == 2 for r in rows)
    hist = read_rows(tmp_path / "overlap_histogram.csv")
    assert {r["source"] for r in hist} == {"0", "1"}
    assert json.loads((tmp_path / "resolved_config.json").read_text())[
        "synthetic"] is True


def test_star_eval_without_extract_exit_3(tmp_path, capsys):
    code, _, err = run_cli(["star-eval", "--outdir", str(tmp_path)], capsys)
    assert code == 3
    assert "--synthetic" in err and "--star-csv" in err


def test_simulate_power_smoke(tmp_path, capsys):
    code, _, err = run_cli([
        "simulate-power", "--method", "covariate_adjustment",
        "--n1", "120", "--n0", "60", "--beta", "0.1", "--reps", "2",
        "--setting", "absent", "--seed", "3", "--outdir", str(tmp_path)],
        capsys)
    assert code == 0, err
    rows = read_rows(tmp_path / "power_results.csv")
    assert len(rows) == 1
    row = rows[0]
    assert row["method"] == "covariate_adjustment"
    assert row["setting"] == "absent"
    assert float(row["rejection_rate"]) in (0.0, 0.5, 1.0)


def test_console_script_resolves():
    proc = subprocess.run(
        [sys.executable, "-m", "catefuse.cli", "--help"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate-rmse" in proc.stdout
