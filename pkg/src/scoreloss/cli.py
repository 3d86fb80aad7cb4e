"""Command-line entry point.

Grammar::

    scoreloss <subcommand> --config PATH [--out DIR] [--seed N] [--jobs N] [key=value ...]

Subcommands are ``prepare``, ``train``, ``sweep``, ``verify`` and
``experiment``. The config is a YAML (or JSON) mapping with ``version: 1``.
Overrides use dotted keys (``train.max_epochs=50``); values are parsed as
YAML scalars or flow collections (``network.hidden=[8,4]``).

Every subcommand validates its config and computes all outputs in memory
before writing anything, then writes the files plus ``manifest.json`` with
a SHA-256 per file. Exit codes: 0 ok, 2 config, 3 data, 4 numeric abort,
5 verification failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from .confusion import LabeledBatch
from .experiment import (
    ExperimentConfig,
    load_table,
    loss_from_config,
    run_experiment,
    validate_data_config,
    write_experiment,
)
from .ingest import DataError, PreprocessPlan, clean_and_encode, read_csv
from .network import NetworkSpec, ObjectiveSpec, forward, load_weights, weights_to_dict
from .scores import ScoreKind
from .threshold import sweep
from .train import NumericalError, TrainConfig, coerce_train_fields, fit, split_validation
from .verify import DEFAULT_EPSILONS, REPORT_COLUMNS, default_suite

__all__ = ["main", "ConfigError", "EXIT_OK", "EXIT_CONFIG", "EXIT_DATA", "EXIT_NUMERIC", "EXIT_VERIFY"]

log = logging.getLogger("scoreloss")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_VERIFY = 5

SCHEMA_VERSION = 1
MANIFEST = "manifest.json"


class ConfigError(ValueError):
    """The configuration file or an override is invalid."""


# ---------------------------------------------------------------- config io


def load_config(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a mapping")
    version = cfg.pop("version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"config schema version must be {SCHEMA_VERSION}, got {version!r}")
    _resolve_paths(cfg, path.parent)
    return cfg


def _resolve_paths(cfg: dict[str, Any], base: Path) -> None:
    """Relative file paths in a config are taken relative to the config file."""

    def fix(holder, key):
        if isinstance(holder, dict) and isinstance(holder.get(key), str):
            p = Path(holder[key])
            if not p.is_absolute():
                holder[key] = str(base / p)

    fix(cfg.get("data"), "path")
    fix(cfg, "input")
    fix(cfg, "predictions")
    fix(cfg, "weights")


def apply_overrides(cfg: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    out = copy.deepcopy(cfg)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        try:
            value = yaml.safe_load(raw) if raw else ""
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: {exc}") from exc
        parts = key.split(".")
        node = out
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            if not isinstance(child, dict):
                raise ConfigError(f"override {key!r}: {part!r} is not a mapping")
            node = child
        node[parts[-1]] = value
    return out


def _check_keys(cfg: dict[str, Any], allowed: set[str], where: str) -> None:
    extra = set(cfg) - allowed
    if extra:
        raise ConfigError(f"unknown {where} keys: {sorted(extra)}")


def _plan(cfg: dict[str, Any]) -> PreprocessPlan:
    try:
        return PreprocessPlan.from_config(cfg.get("plan"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"plan: {exc}") from exc


def _train_config(train: dict[str, Any] | None, loss_cfg: dict[str, Any], seed: int) -> TrainConfig:
    train = coerce_train_fields(dict(train or {}))
    lam = float(train.pop("lam", 0.0))
    reg = train.pop("regularizer", None)
    objective = ObjectiveSpec(loss_from_config(loss_cfg), lam, reg)
    return TrainConfig(objective=objective, seed=seed, **train)


# ---------------------------------------------------------------- outputs


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cell(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _manifest(command: str, config: dict[str, Any], files: dict[str, str]) -> str:
    doc = {
        "command": command,
        "config_sha256": hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest(),
        "files": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(files.items())},
    }
    return _json_text(doc)


def _write_outputs(out_dir: Path, command: str, config: dict[str, Any], files: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text)
    (out_dir / MANIFEST).write_text(_manifest(command, config, files))


@dataclass
class Outcome:
    files: dict[str, str]
    code: int = EXIT_OK


# ---------------------------------------------------------------- subcommands
# each ``build_*`` validates and returns a zero-argument job; no work happens
# until the job is called.


def build_prepare(cfg: dict[str, Any], args) -> Callable[[], Outcome]:
    _check_keys(cfg, {"input", "missing_tokens", "plan", "seed"}, "prepare")
    if "input" not in cfg:
        raise ConfigError("prepare needs 'input' (a CSV path)")
    plan = _plan(cfg)
    tokens = tuple(str(t) for t in cfg.get("missing_tokens", ("", "?")))

    def job() -> Outcome:
        path = Path(cfg["input"])
        if not path.is_file():
            raise DataError(f"input file not found: {path}")
        raw = read_csv(path, missing_tokens=tokens, label=plan.label)
        enc = clean_and_encode(raw, plan)
        features = enc.feature_columns()
        summary = {"n": enc.n_rows, "n_features": len(features), "feature_columns": features}
        if enc.label is not None:
            y = enc.labels()
            summary.update(label=enc.label, n_pos=int(y.sum()), n_neg=int(y.size - y.sum()))
        return Outcome({"encoded.csv": enc.to_csv(), "summary.json": _json_text(summary)})

    return job


def build_train(cfg: dict[str, Any], args) -> Callable[[], Outcome]:
    _check_keys(cfg, {"data", "plan", "network", "train", "loss", "seed", "report_score"}, "train")
    data = dict(cfg.get("data") or {})
    validate_data_config(data)
    plan = _plan(cfg)
    network = dict(cfg.get("network") or {})
    _check_keys(network, {"hidden"}, "network")
    hidden = tuple(int(h) for h in network.get("hidden", (16, 8)))
    if "loss" not in cfg:
        raise ConfigError("train needs a 'loss' entry")
    config = _train_config(cfg.get("train"), cfg["loss"], int(cfg.get("seed", 0)))
    kind = ScoreKind.parse(cfg.get("report_score", "f1"))

    def job() -> Outcome:
        enc = clean_and_encode(load_table(data, plan.label), plan)
        x, y = enc.features(), enc.labels()
        spec = NetworkSpec.from_hidden(x.shape[1], hidden)
        report = fit(spec, config, x, y)
        sw = sweep(LabeledBatch(forward(spec, report.final_weights, x), y), kind)
        split = split_validation(x, y, config.validation_fraction, config.seed)
        run = report.to_record(config=config)
        run.pop("train_history")
        run.pop("validation_history")
        run.update(
            network=list(spec.layer_widths),
            split=split.class_counts(),
            report_score=kind.value,
            sweep_portion="train+validation",
            sweep=sw.summary(),
        )
        history = _csv_text(
            ["epoch", "train_objective", "validation_objective"],
            [[i + 1, _cell(t), _cell(v)] for i, (t, v) in enumerate(zip(report.train_history, report.validation_history))],
        )
        return Outcome(
            {
                "run.json": _json_text(run),
                "weights.json": _json_text(weights_to_dict(spec, report.final_weights)),
                "history.csv": history,
            }
        )

    return job


def build_sweep(cfg: dict[str, Any], args) -> Callable[[], Outcome]:
    _check_keys(cfg, {"score", "predictions", "weights", "data", "plan", "seed"}, "sweep")
    kind = ScoreKind.parse(cfg.get("score", "f1"))
    has_pred = "predictions" in cfg
    has_model = "weights" in cfg or "data" in cfg
    if has_pred == has_model:
        raise ConfigError("sweep needs either 'predictions' or both 'weights' and 'data'")
    if has_model:
        if "weights" not in cfg or "data" not in cfg:
            raise ConfigError("sweep from a model needs both 'weights' and 'data'")
        validate_data_config(dict(cfg["data"]))
    plan = _plan(cfg)

    def batch_from_predictions() -> LabeledBatch:
        path = Path(cfg["predictions"])
        if not path.is_file():
            raise DataError(f"predictions file not found: {path}")
        table = read_csv(path)
        missing = {"prediction", "label"} - set(table.columns)
        if missing:
            raise DataError(f"predictions file lacks columns {sorted(missing)}")
        if table.frame[["prediction", "label"]].isna().any().any():
            raise DataError("predictions file has missing values")
        return LabeledBatch(table.frame["prediction"].to_numpy(float), table.frame["label"].to_numpy().astype(int))

    def batch_from_model() -> LabeledBatch:
        try:
            spec, weights = load_weights(cfg["weights"])
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot load weights: {exc}") from exc
        enc = clean_and_encode(load_table(dict(cfg["data"]), plan.label), plan)
        return LabeledBatch(forward(spec, weights, enc.features()), enc.labels())

    def job() -> Outcome:
        try:
            batch = batch_from_predictions() if has_pred else batch_from_model()
        except ValueError as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(str(exc)) from exc
        result = sweep(batch, kind)
        summary = dict(result.summary(), score=kind.value, n=batch.n, n_pos=batch.n_pos)
        return Outcome({"sweep.csv": result.to_csv(), "sweep.json": _json_text(summary)})

    return job


def build_verify(cfg: dict[str, Any], args) -> Callable[[], Outcome]:
    _check_keys(cfg, {"seed", "mc_draws", "n_batches", "epsilons"}, "verify")
    seed = int(cfg.get("seed", 0))
    mc_draws = int(cfg.get("mc_draws", 100_000))
    n_batches = int(cfg.get("n_batches", 3))
    epsilons = tuple(float(e) for e in cfg.get("epsilons", DEFAULT_EPSILONS))
    if n_batches < 1:
        raise ConfigError("n_batches must be positive")
    if mc_draws < 10_000:
        raise ConfigError("mc_draws must be at least 10000")

    def job() -> Outcome:
        suite = default_suite(seed=seed, mc_draws=mc_draws, n_batches=n_batches, epsilon_grid=epsilons)
        rows = [[_cell(r[c]) for c in REPORT_COLUMNS] for r in suite.rows]
        summary = {
            "checks": len(suite.rows),
            "asserted": sum(1 for r in suite.rows if r["asserted"]),
            "violations": suite.violations,
            "passed": suite.passed,
            "seed": seed,
            "mc_draws": mc_draws,
        }
        files = {"verify.csv": _csv_text(REPORT_COLUMNS, rows), "verify.json": _json_text(summary)}
        return Outcome(files, EXIT_OK if suite.passed else EXIT_VERIFY)

    return job


def build_experiment(cfg: dict[str, Any], args) -> Callable[[], Outcome]:
    config = ExperimentConfig.from_dict(cfg)
    jobs = max(1, int(args.jobs))

    def job() -> Outcome:
        result = run_experiment(config, jobs=jobs)
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_experiment(result, tmp)
            return Outcome({p.name: p.read_text() for p in paths})

    return job


BUILDERS = {
    "prepare": build_prepare,
    "train": build_train,
    "sweep": build_sweep,
    "verify": build_verify,
    "experiment": build_experiment,
}


# ---------------------------------------------------------------- main


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scoreloss", description="Score-oriented losses: training, threshold sweeps, bound checks and experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in BUILDERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML or JSON config file (version: 1)")
        p.add_argument("--out", default=None, help=f"output directory (default: ./{name}-out)")
        p.add_argument("--seed", type=int, default=None, help="overrides the config's seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (experiment only)")
        p.add_argument("overrides", nargs="*", metavar="key=value", help="dotted config overrides")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out_dir = Path(args.out or f"{args.command}-out")

    try:
        cfg = apply_overrides(load_config(args.config), args.overrides)
        if args.seed is not None:
            cfg["seed"] = args.seed
        job = BUILDERS[args.command](cfg, args)
    except (ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        outcome = job()
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # the config already validated, so what remains is about the data
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA

    _write_outputs(out_dir, args.command, cfg, outcome.files)
    if outcome.code == EXIT_VERIFY:
        print("verification failed: see verify.csv", file=sys.stderr)
    else:
        log.info("wrote %d files to %s", len(outcome.files) + 1, out_dir)
    return outcome.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
