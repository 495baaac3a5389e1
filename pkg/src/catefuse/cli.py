"""Command-line entry point.

Subcommands map onto the library's experiment and data operations:

* ``simulate-rmse`` / ``simulate-power`` -- synthetic-scenario benchmarks,
* ``star-prep`` -- student-level raw CSV to trial/observational CSVs,
* ``star-eval`` -- robustness sweep on a student-level extract (or a
  synthetic stand-in via ``--synthetic``),
* ``transport-test`` -- transportability test on a fused CSV, result as a
  single JSON line on stdout,
* ``fit`` -- fit one learner on a fused CSV and emit predictions.

Options resolve in three layers: built-in defaults, then a ``--config``
JSON file, then explicit flags. Unknown config keys are rejected. Every
run writes ``resolved_config.json`` next to its outputs so it can be
re-run exactly. Exit codes: 0 success, 2 bad usage/config, 3 missing or
malformed input data, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .bench import (
    POWER_METHODS,
    PowerSpec,
    RmseSpec,
    StarSpec,
    overlap_histogram,
    run_power_experiment,
    run_rmse_experiment,
    run_star_experiment,
)
from .data import CsvSchema, DataError, load_csv, save_csv
from .inference import transportability_test
from .learners import LEARNER_NAMES, make_learner
from .rng import derive_seed
from .simgen import SCENARIOS
from .star import build_star_partition, load_star_csv, synthetic_star_extract

__all__ = ["main"]

_ENV_OUTDIR = "CATEFUSE_OUTDIR"
_SETTINGS = ("absent", "present")
_STAGE1 = ("gbrt", "linear")


class ConfigError(Exception):
    """Bad config file or option values (exit 2)."""


class InputError(Exception):
    """Missing or unusable input data (exit 3)."""


# Per-subcommand option tables: key -> (kind, default[, choices]).
# Keys double as config-file keys and argparse dests.
_OPTIONS = {
    "simulate-rmse": {
        "scenarios": ("str_list", list(SCENARIOS)[:2], SCENARIOS),
        "learners": ("str_list", list(LEARNER_NAMES), LEARNER_NAMES),
        "n1": ("int", 250),
        "n0_grid": ("int_list", [100, 1000, 10000]),
        "reps": ("int", 100),
        "seed": ("int", 0),
        "eval_n": ("int", 2000),
        "stage1": ("str", "gbrt", _STAGE1),
        "workers": ("int", 1),
        "outdir": ("opt_str", None),
    },
    "simulate-power": {
        "methods": ("str_list", list(POWER_METHODS), POWER_METHODS),
        "n1_grid": ("int_list", [500]),
        "beta": ("float", 0.03),
        "n0": ("int", 1000),
        "reps": ("int", 100),
        "seed": ("int", 0),
        "settings": ("str_list", list(_SETTINGS), _SETTINGS),
        "workers": ("int", 1),
        "outdir": ("opt_str", None),
    },
    "star-prep": {
        "input": ("opt_str", None),
        "seed": ("int", 0),
        "trial_e": ("float", 0.5),
        "outdir": ("opt_str", None),
    },
    "star-eval": {
        "star_csv": ("opt_str", None),
        "synthetic": ("bool", None),
        "rural": ("int", 3000),
        "urban": ("int", 1500),
        "trial_e": ("float", 0.5),
        "learners": ("str_list", list(LEARNER_NAMES), LEARNER_NAMES),
        "n1": ("int", 1000),
        "n0_grid": ("int_list", [200, 2000]),
        "reps": ("int", 50),
        "seed": ("int", 0),
        "holdout": ("float", 0.3),
        "stage1": ("str", "linear", _STAGE1),
        "workers": ("int", 1),
        "outdir": ("opt_str", None),
    },
    "transport-test": {
        "input": ("opt_str", None),
        "outdir": ("opt_str", None),
    },
    "fit": {
        "learner": ("opt_str", None, LEARNER_NAMES),
        "train": ("opt_str", None),
        "test": ("opt_str", None),
        "stage1": ("str", "gbrt", _STAGE1),
        "seed": ("int", 0),
        "outdir": ("opt_str", None),
    },
}

_REQUIRED = {
    "star-prep": ("input",),
    "transport-test": ("input",),
    "fit": ("learner", "train"),
}


def _coerce(key, kind, value, choices=None):
    """Validate one config/flag value against its declared kind."""
    def fail(why):
        raise ConfigError(f"option {key!r}: {why}")

    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            fail(f"expected an integer, got {value!r}")
        try:
            value = int(value)
        except ValueError:
            fail(f"expected an integer, got {value!r}")
    elif kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            fail(f"expected a number, got {value!r}")
        try:
            value = float(value)
        except ValueError:
            fail(f"expected a number, got {value!r}")
    elif kind == "bool":
        if not isinstance(value, bool):
            fail(f"expected true/false, got {value!r}")
    elif kind in ("str", "opt_str"):
        if not isinstance(value, str):
            fail(f"expected a string, got {value!r}")
    elif kind == "int_list":
        if not isinstance(value, (list, tuple)):
            value = [value]
        value = [_coerce(key, "int", v) for v in value]
        if not value:
            fail("expected a nonempty list")
    elif kind == "str_list":
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, (list, tuple)):
            fail(f"expected a list of strings, got {value!r}")
        value = [_coerce(key, "str", v, choices) for v in value]
        if not value:
            fail("expected a nonempty list")
        return value
    if choices is not None and kind in ("str", "opt_str") and value not in choices:
        fail(f"expected one of {tuple(choices)}, got {value!r}")
    return value


def _resolve(command, args):
    """Defaults, then config file, then explicit flags."""
    table = _OPTIONS[command]
    merged = {key: spec[1] for key, spec in table.items()}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {args.config}: expected a JSON object")
        for key, value in loaded.items():
            if key not in table:
                raise ConfigError(f"unknown config key {key!r}")
            spec = table[key]
            merged[key] = _coerce(key, spec[0], value,
                                  spec[2] if len(spec) > 2 else None)
    for key, spec in table.items():
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = _coerce(key, spec[0], value,
                                  spec[2] if len(spec) > 2 else None)
    for key in _REQUIRED.get(command, ()):
        if merged[key] is None:
            raise ConfigError(f"option {key!r} is required")
    return merged


def _outdir(merged) -> Path:
    path = merged.get("outdir") or os.environ.get(_ENV_OUTDIR) or "."
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_resolved(command, merged, outdir: Path, extra=None) -> None:
    snapshot = {"command": command}
    snapshot.update(merged)
    snapshot["outdir"] = str(outdir)
    if extra:
        snapshot.update(extra)
    path = outdir / "resolved_config.json"
    path.write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}")


def _emit(result, path: Path) -> None:
    result.write_csv(path)
    print(f"wrote {path}")


def _build_spec(cls, **kwargs):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _load_fused(path):
    """Fused CSV with s/a/y/e columns; everything else is a covariate,
    except a truth column emitted by labeled writers."""
    try:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh), None)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    if header is None:
        raise InputError(f"{path}: empty file")
    skip = {"s", "a", "y", "e", "tau_true"}
    x_cols = tuple(name for name in header if name not in skip)
    return load_csv(path, CsvSchema(x=x_cols))


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_simulate_rmse(merged, outdir):
    spec = _build_spec(
        RmseSpec,
        scenarios=tuple(merged["scenarios"]),
        learners=tuple(merged["learners"]),
        n1=merged["n1"],
        n0_grid=tuple(merged["n0_grid"]),
        reps=merged["reps"],
        seed=merged["seed"],
        eval_n=merged["eval_n"],
        stage1=merged["stage1"],
        workers=merged["workers"],
    )
    _emit(run_rmse_experiment(spec), outdir / "rmse_results.csv")


def _cmd_simulate_power(merged, outdir):
    spec = _build_spec(
        PowerSpec,
        methods=tuple(merged["methods"]),
        n1_grid=tuple(merged["n1_grid"]),
        beta=merged["beta"],
        n0=merged["n0"],
        reps=merged["reps"],
        seed=merged["seed"],
        settings=tuple(merged["settings"]),
        workers=merged["workers"],
    )
    _emit(run_power_experiment(spec), outdir / "power_results.csv")


def _cmd_star_prep(merged, outdir):
    raw = _load_star(merged["input"])
    partition = build_star_partition(raw, seed=merged["seed"],
                                     trial_e=merged["trial_e"])
    save_csv(partition.trial, outdir / "star_trial.csv")
    print(f"wrote {outdir / 'star_trial.csv'}")
    save_csv(partition.external, outdir / "star_external.csv")
    print(f"wrote {outdir / 'star_external.csv'}")
    return {
        "n_removed": partition.n_removed,
        "feature_names": list(partition.feature_names),
    }


def _load_star(path):
    try:
        return load_star_csv(path)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None


def _cmd_star_eval(merged, outdir):
    if merged["star_csv"] is not None:
        raw = _load_star(merged["star_csv"])
    elif merged["synthetic"]:
        raw = synthetic_star_extract(merged["rural"], merged["urban"],
                                     seed=derive_seed(merged["seed"], "raw"))
    else:
        raise InputError(
            "star extract not provided; pass --star-csv PATH or --synthetic")
    partition = build_star_partition(
        raw, seed=derive_seed(merged["seed"], "partition"),
        trial_e=merged["trial_e"])
    spec = _build_spec(
        StarSpec,
        learners=tuple(merged["learners"]),
        n1=merged["n1"],
        n0_grid=tuple(merged["n0_grid"]),
        reps=merged["reps"],
        seed=merged["seed"],
        holdout=merged["holdout"],
        stage1=merged["stage1"],
        workers=merged["workers"],
    )
    _emit(run_star_experiment(spec, partition), outdir / "star_results.csv")
    _emit(overlap_histogram(partition, seed=merged["seed"]),
          outdir / "overlap_histogram.csv")


def _cmd_transport_test(merged, outdir):
    data = _load_fused(merged["input"])
    res = transportability_test(data)
    print(json.dumps({
        "estimate": res.estimate,
        "se": res.se,
        "ci_lo": res.ci_lo,
        "ci_hi": res.ci_hi,
        "p_value": res.p_value,
        "rejected": res.rejected,
        "method": res.method,
    }))


def _cmd_fit(merged, outdir):
    train = _load_fused(merged["train"])
    model = make_learner(merged["learner"], stage1=merged["stage1"],
                         seed=merged["seed"])
    model.fit(train)
    target = _load_fused(merged["test"]) if merged["test"] else train
    pred = model.predict(target.x)
    path = outdir / "predictions.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{j}" for j in range(target.d)] + ["tau_hat"])
        for i in range(target.n):
            writer.writerow([repr(float(v)) for v in target.x[i]]
                            + [repr(float(pred[i]))])
    print(f"wrote {path}")


_COMMANDS = {
    "simulate-rmse": _cmd_simulate_rmse,
    "simulate-power": _cmd_simulate_power,
    "star-prep": _cmd_star_prep,
    "star-eval": _cmd_star_eval,
    "transport-test": _cmd_transport_test,
    "fit": _cmd_fit,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catefuse",
        description="Treatment-effect estimation benchmarks on fused "
                    "trial + observational data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with option defaults")
        for call in flags:
            call(p)
        return p

    int_flag = lambda p, flag, dest, h: p.add_argument(
        flag, dest=dest, type=int, default=None, help=h)
    float_flag = lambda p, flag, dest, h: p.add_argument(
        flag, dest=dest, type=float, default=None, help=h)
    str_flag = lambda p, flag, dest, h, choices=None: p.add_argument(
        flag, dest=dest, default=None, choices=choices, help=h)
    list_flag = lambda p, flag, dest, h, typ=str, choices=None: p.add_argument(
        flag, dest=dest, action="append", type=typ, default=None,
        choices=choices, help=h + " (repeatable)")
    outdir_flag = lambda p: str_flag(
        p, "--outdir", "outdir", f"output directory (default ${_ENV_OUTDIR} or .)")

    add("simulate-rmse", "RMSE-vs-truth table on synthetic scenarios", [
        lambda p: list_flag(p, "--scenario", "scenarios", "scenario to run",
                            choices=SCENARIOS),
        lambda p: list_flag(p, "--learner", "learners", "learner to include",
                            choices=LEARNER_NAMES),
        lambda p: int_flag(p, "--n1", "n1", "trial rows per draw"),
        lambda p: list_flag(p, "--n0", "n0_grid", "external rows per draw",
                            typ=int),
        lambda p: int_flag(p, "--reps", "reps", "replications"),
        lambda p: int_flag(p, "--seed", "seed", "experiment seed"),
        lambda p: int_flag(p, "--eval-n", "eval_n", "evaluation draw size"),
        lambda p: str_flag(p, "--stage1", "stage1", "nuisance family",
                           choices=_STAGE1),
        lambda p: int_flag(p, "--workers", "workers", "parallel workers"),
        outdir_flag,
    ])
    add("simulate-power", "type-1 error and power of heterogeneity tests", [
        lambda p: list_flag(p, "--method", "methods", "test to include",
                            choices=POWER_METHODS),
        lambda p: list_flag(p, "--n1", "n1_grid", "trial rows", typ=int),
        lambda p: float_flag(p, "--beta", "beta", "effect slope when present"),
        lambda p: int_flag(p, "--n0", "n0", "external rows per draw"),
        lambda p: int_flag(p, "--reps", "reps", "replications"),
        lambda p: int_flag(p, "--seed", "seed", "experiment seed"),
        lambda p: list_flag(p, "--setting", "settings", "effect setting",
                            choices=_SETTINGS),
        lambda p: int_flag(p, "--workers", "workers", "parallel workers"),
        outdir_flag,
    ])
    add("star-prep", "raw student CSV to trial/observational CSVs", [
        lambda p: str_flag(p, "--input", "input", "raw student-level CSV"),
        lambda p: int_flag(p, "--seed", "seed", "partition seed"),
        lambda p: float_flag(p, "--trial-e", "trial_e",
                             "recorded trial treatment probability"),
        outdir_flag,
    ])
    add("star-eval", "robustness sweep on partitioned student data", [
        lambda p: str_flag(p, "--star-csv", "star_csv", "raw student CSV"),
        lambda p: p.add_argument("--synthetic", dest="synthetic",
                                 action="store_const", const=True,
                                 default=None,
                                 help="use a synthetic extract instead of a file"),
        lambda p: int_flag(p, "--rural", "rural", "synthetic rural rows"),
        lambda p: int_flag(p, "--urban", "urban", "synthetic urban rows"),
        lambda p: float_flag(p, "--trial-e", "trial_e",
                             "recorded trial treatment probability"),
        lambda p: list_flag(p, "--learner", "learners", "learner to include",
                            choices=LEARNER_NAMES),
        lambda p: int_flag(p, "--n1", "n1", "trial subsample size"),
        lambda p: list_flag(p, "--n0", "n0_grid", "external subsample size",
                            typ=int),
        lambda p: int_flag(p, "--reps", "reps", "replications"),
        lambda p: int_flag(p, "--seed", "seed", "experiment seed"),
        lambda p: float_flag(p, "--holdout", "holdout",
                             "held-out trial fraction"),
        lambda p: str_flag(p, "--stage1", "stage1", "nuisance family",
                           choices=_STAGE1),
        lambda p: int_flag(p, "--workers", "workers", "parallel workers"),
        outdir_flag,
    ])
    add("transport-test", "transportability test on a fused CSV", [
        lambda p: str_flag(p, "--input", "input", "fused CSV with s/a/y/e"),
        outdir_flag,
    ])
    add("fit", "fit one learner and emit predictions", [
        lambda p: str_flag(p, "--learner", "learner", "learner name",
                           choices=LEARNER_NAMES),
        lambda p: str_flag(p, "--train", "train", "fused training CSV"),
        lambda p: str_flag(p, "--test", "test",
                           "rows to predict (default: training rows)"),
        lambda p: str_flag(p, "--stage1", "stage1", "nuisance family",
                           choices=_STAGE1),
        lambda p: int_flag(p, "--seed", "seed", "fit seed"),
        outdir_flag,
    ])
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        merged = _resolve(args.command, args)
        outdir = _outdir(merged)
        extra = _COMMANDS[args.command](merged, outdir)
        _write_resolved(args.command, merged, outdir, extra)
        return 0
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return 2
    except (InputError, FileNotFoundError, DataError) as exc:
        print(f"error[input]: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:
        print(f"error[runtime]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
