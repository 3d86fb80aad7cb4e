"""Repeated randomized training runs and their aggregate statistics.

Each repeat draws a training portion (a random subsample or a shifted time
window), trains one network per loss in the grid, sweeps the threshold on
the training portion and evaluates the report score at 0.5 and at the
optimal threshold. Aggregates use successful runs only.

Seeds: repeat ``r`` under master seed ``s`` resamples data with
``default_rng([s, r, 0])`` and trains every loss with the integer seed drawn
from ``SeedSequence([s, r, 1])``, so losses within a repeat are paired (same
data, same initial weights).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .distributions import DistributionKind, ThresholdDistribution, pdf
from .ingest import (
    DataError,
    PreprocessPlan,
    TabularDataset,
    WindowPlan,
    clean_and_encode,
    column_stats,
    encode_features,
    make_windows,
    read_csv,
)
from .network import CrossEntropy, NetworkSpec, ObjectiveSpec, forward
from .scores import ScoreKind, SolLoss
from .threshold import optimal_threshold_histogram, scores_at, sweep
from .train import NumericalError, TrainConfig, coerce_train_fields, fit

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "run_experiment",
    "run_seeds",
    "threshold_distribution_report",
    "loss_from_config",
    "loss_to_config",
    "AGGREGATE_COLUMNS",
    "load_table",
    "write_experiment",
]

log = logging.getLogger(__name__)

SWEEP_PORTION = "train+validation"


def loss_from_config(cfg: dict[str, Any]) -> SolLoss | CrossEntropy:
    """``{"loss": "ce"}`` or ``{"loss": "sol", "score": "tss", "distribution": {...}}``."""
    if not isinstance(cfg, dict) or "loss" not in cfg:
        raise ValueError(f"loss entry needs a 'loss' key: {cfg!r}")
    kind = str(cfg["loss"]).lower()
    if kind in ("ce", "cross_entropy", "crossentropy"):
        extra = set(cfg) - {"loss"}
        if extra:
            raise ValueError(f"unknown keys for cross-entropy: {sorted(extra)}")
        return CrossEntropy()
    if kind != "sol":
        raise ValueError(f"unknown loss {cfg['loss']!r}")
    extra = set(cfg) - {"loss", "score", "distribution"}
    if extra:
        raise ValueError(f"unknown keys for sol loss: {sorted(extra)}")
    if "score" not in cfg or "distribution" not in cfg:
        raise ValueError("sol loss needs 'score' and 'distribution'")
    return SolLoss(ScoreKind.parse(cfg["score"]), ThresholdDistribution.from_config(cfg["distribution"]))


def loss_to_config(loss: SolLoss | CrossEntropy) -> dict[str, Any]:
    if isinstance(loss, CrossEntropy):
        return {"loss": "ce"}
    return {"loss": "sol", "score": loss.score.value, "distribution": loss.dist.to_config()}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; see ``from_dict`` for the file layout."""

    data: dict[str, Any]
    plan: PreprocessPlan
    hidden: tuple[int, ...]
    train: TrainConfig
    losses: tuple[SolLoss | CrossEntropy, ...]
    repeats: int = 30
    resample: dict[str, Any] = field(default_factory=lambda: {"rule": "subsample", "fraction": 0.8})
    report_score: ScoreKind = ScoreKind.F1
    seed: int = 0
    histogram_bins: int = 20

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if not self.losses:
            raise ValueError("loss grid is empty")
        labels = [loss.label() for loss in self.losses]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate losses in grid: {labels}")
        rule = self.resample.get("rule")
        if rule == "subsample":
            frac = float(self.resample.get("fraction", 0.8))
            if not 0.0 < frac <= 1.0:
                raise ValueError("subsample fraction must lie in (0, 1]")
        elif rule == "windows":
            missing = {"train_length", "test_length", "shift"} - set(self.resample)
            if missing:
                raise ValueError(f"windows resample needs {sorted(missing)}")
            _window_plan(self)
        else:
            raise ValueError(f"unknown resample rule {rule!r}")
        validate_data_config(self.data)
        if self.histogram_bins < 1:
            raise ValueError("histogram_bins must be positive")

    @classmethod
    def from_dict(cls, cfg: dict[str, Any]) -> "ExperimentConfig":
        cfg = dict(cfg)
        known = {"data", "plan", "network", "train", "losses", "repeats", "resample", "report_score", "seed", "histogram_bins"}
        extra = set(cfg) - known
        if extra:
            raise ValueError(f"unknown experiment keys: {sorted(extra)}")
        seed = int(cfg.get("seed", 0))
        train_cfg = coerce_train_fields(dict(cfg.get("train") or {}))
        lam = float(train_cfg.pop("lam", 0.0))
        reg = train_cfg.pop("regularizer", None)
        losses = tuple(loss_from_config(entry) for entry in (cfg.get("losses") or []))
        placeholder = ObjectiveSpec(losses[0] if losses else CrossEntropy(), lam, reg)
        train = TrainConfig(objective=placeholder, seed=seed, **train_cfg)
        network = dict(cfg.get("network") or {})
        if set(network) - {"hidden"}:
            raise ValueError(f"unknown network keys: {sorted(set(network) - {'hidden'})}")
        return cls(
            data=dict(cfg.get("data") or {}),
            plan=PreprocessPlan.from_config(cfg.get("plan")),
            hidden=tuple(int(h) for h in network.get("hidden", (16, 8))),
            train=train,
            losses=losses,
            repeats=int(cfg.get("repeats", 30)),
            resample=dict(cfg.get("resample") or {"rule": "subsample", "fraction": 0.8}),
            report_score=ScoreKind.parse(cfg.get("report_score", "f1")),
            seed=seed,
            histogram_bins=int(cfg.get("histogram_bins", 20)),
        )

    def to_dict(self) -> dict[str, Any]:
        t = self.train
        return {
            "data": self.data,
            "plan": {
                "label": self.plan.label,
                "label_positive": self.plan.label_positive,
                "drop_missing": self.plan.drop_missing,
                "drop_columns": list(self.plan.drop_columns),
                "indicators": dict(self.plan.indicators),
                "one_hot": self.plan.one_hot,
                "standardize": self.plan.standardize,
            },
            "network": {"hidden": list(self.hidden)},
            "train": {
                "max_epochs": t.max_epochs,
                "patience": t.patience,
                "validation_fraction": t.validation_fraction,
                "learning_rate": t.learning_rate,
                "beta1": t.beta1,
                "beta2": t.beta2,
                "eps": t.eps,
                "batch_size": t.batch_size,
                "lam": t.objective.lam,
                "regularizer": t.objective.regularizer,
            },
            "losses": [loss_to_config(loss) for loss in self.losses],
            "repeats": self.repeats,
            "resample": self.resample,
            "report_score": self.report_score.value,
            "seed": self.seed,
            "histogram_bins": self.histogram_bins,
        }


DATA_SOURCES = ("csv", "synthetic_adult", "synthetic_pollution")


def validate_data_config(data: dict[str, Any]) -> None:
    source = data.get("source")
    if source not in DATA_SOURCES:
        raise ValueError(f"unknown data source {source!r}")
    allowed = {
        "csv": {"source", "path", "missing_tokens"},
        "synthetic_adult": {"source", "n", "seed"},
        "synthetic_pollution": {"source", "n_hours", "seed", "positive_rate"},
    }[source]
    extra = set(data) - allowed
    if extra:
        raise ValueError(f"unknown keys for data source {source!r}: {sorted(extra)}")
    if source == "csv" and "path" not in data:
        raise ValueError("csv data source needs a 'path'")


def load_table(data: dict[str, Any], label: str | None = None) -> TabularDataset:
    """Raw table from a data-source entry (a CSV path or a seeded generator)."""
    validate_data_config(data)
    source = data["source"]
    if source == "csv":
        path = Path(data["path"])
        if not path.is_file():
            raise DataError(f"data file not found: {path}")
        return read_csv(path, missing_tokens=tuple(data.get("missing_tokens", ("", "?"))), label=label)
    if source == "synthetic_adult":
        from .synthetic import adult_like_csv

        text = adult_like_csv(int(data.get("n", 2000)), int(data.get("seed", 0)))
        return read_csv(io.StringIO(text), label=label)
    from .synthetic import POLLUTION_POSITIVE_RATE, pollution_like

    return pollution_like(
        int(data.get("n_hours", 2800)),
        int(data.get("seed", 0)),
        float(data.get("positive_rate", POLLUTION_POSITIVE_RATE)),
    )


def load_dataset(config: ExperimentConfig) -> TabularDataset:
    return load_table(config.data, config.plan.label)


def run_seeds(master: int, repeat: int) -> tuple[np.random.Generator, int]:
    """Data-resampling generator and shared training seed for one repeat."""
    data_rng = np.random.default_rng([master, repeat, 0])
    train_seed = int(np.random.SeedSequence([master, repeat, 1]).generate_state(1)[0])
    return data_rng, train_seed


@dataclass(frozen=True, eq=False)
class _Prepared:
    """Encoded matrices plus what windowed runs need for per-window scaling."""

    x: np.ndarray
    y: np.ndarray
    to_scale: np.ndarray | None  # column indices standardized per window


def _prepare(config: ExperimentConfig) -> _Prepared:
    raw = load_dataset(config)
    if config.resample["rule"] == "subsample":
        enc = clean_and_encode(raw, config.plan)
        return _Prepared(enc.features(), enc.labels(), None)
    # windows: standardization must be fitted on each training window only
    enc, to_scale = encode_features(raw, config.plan)
    cols = enc.feature_columns()
    idx = np.array([cols.index(c) for c in to_scale], dtype=int)
    return _Prepared(enc.features(), enc.labels(), idx)


def _window_plan(config: ExperimentConfig) -> WindowPlan:
    r = config.resample
    return WindowPlan(int(r["train_length"]), int(r["test_length"]), int(r["shift"]), config.repeats)


def _portions(config: ExperimentConfig, prep: _Prepared, repeat: int, data_rng):
    n = prep.y.size
    if config.resample["rule"] == "subsample":
        frac = float(config.resample.get("fraction", 0.8))
        k = max(2, int(round(frac * n)))
        rows = np.sort(data_rng.choice(n, size=k, replace=False))
        return prep.x[rows], prep.y[rows], None, None
    train_sl, test_sl = make_windows(n, _window_plan(config))[repeat]
    x_tr, x_te = prep.x[train_sl].copy(), prep.x[test_sl].copy()
    if prep.to_scale is not None and prep.to_scale.size:
        cols = prep.to_scale
        mean, scale = column_stats(x_tr[:, cols])
        x_tr[:, cols] = (x_tr[:, cols] - mean) / scale
        x_te[:, cols] = (x_te[:, cols] - mean) / scale
    return x_tr, prep.y[train_sl], x_te, prep.y[test_sl]


def _score(kind, x, y, spec, weights, tau):
    from .confusion import LabeledBatch

    batch = LabeledBatch(forward(spec, weights, x), y)
    return float(scores_at(batch, kind, [tau])[0]), batch


def _nan_to_none(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _run_repeat(config: ExperimentConfig, prep: _Prepared, repeat: int) -> list[dict[str, Any]]:
    data_rng, train_seed = run_seeds(config.seed, repeat)
    x_tr, y_tr, x_te, y_te = _portions(config, prep, repeat, data_rng)
    spec = NetworkSpec.from_hidden(x_tr.shape[1], config.hidden)
    kind = config.report_score
    records = []
    for li, loss in enumerate(config.losses):
        tc = replace(config.train, objective=replace(config.train.objective, loss=loss), seed=train_seed)
        rec: dict[str, Any] = {
            "repeat": repeat,
            "loss_index": li,
            "loss": loss.label(),
            "loss_config": loss_to_config(loss),
            "seed": train_seed,
            "n_train": int(y_tr.size),
            "n_pos_train": int(y_tr.sum()),
            "sweep_portion": SWEEP_PORTION,
            "error": None,
        }
        try:
            report = fit(spec, tc, x_tr, y_tr)
        except NumericalError as exc:
            rec.update(success=False, error=str(exc), epochs_run=None, best_epoch=None, best_validation_loss=None)
            records.append(rec)
            continue
        s05, batch = _score(kind, x_tr, y_tr, spec, report.final_weights, 0.5)
        sw = sweep(batch, kind)
        rec.update(
            success=report.success,
            epochs_run=report.epochs_run,
            best_epoch=report.best_epoch,
            best_validation_loss=report.best_validation_loss,
            tau_star=sw.tau_star,
            train_score_05=s05,
            train_score_tau_star=sw.best_score,
            out_of_support=_out_of_support(loss, sw.tau_star),
        )
        if x_te is not None:
            rec["test_score_05"] = _score(kind, x_te, y_te, spec, report.final_weights, 0.5)[0]
            rec["test_score_tau_star"] = _score(kind, x_te, y_te, spec, report.final_weights, sw.tau_star)[0]
        records.append(rec)
    return records


def _out_of_support(loss, tau_star: float) -> bool:
    if isinstance(loss, SolLoss) and loss.dist.kind is DistributionKind.RAISED_COSINE:
        lo, hi = loss.dist.mu - loss.dist.delta, loss.dist.mu + loss.dist.delta
        return not (lo < tau_star < hi)
    return False


AGGREGATE_COLUMNS = (
    "loss",
    "runs",
    "success",
    "out_of_support",
    "epochs_mean",
    "epochs_std",
    "tau_star_mean",
    "tau_star_std",
    "train_score_05_mean",
    "train_score_05_std",
    "train_score_tau_star_mean",
    "train_score_tau_star_std",
    "test_score_05_mean",
    "test_score_05_std",
    "test_score_tau_star_mean",
    "test_score_tau_star_std",
)


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    return float(v.mean()), float(v.std())


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    records: list[dict[str, Any]]
    aggregate: list[dict[str, Any]]
    histograms: dict[str, dict[str, Any]]

    def successful(self, loss_label: str) -> list[dict[str, Any]]:
        return [r for r in self.records if r["loss"] == loss_label and r["success"]]

    def aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for row in self.aggregate:
            w.writerow([_csv_cell(row[c]) for c in AGGREGATE_COLUMNS])
        return buf.getvalue()

    def aggregate_json(self) -> str:
        rows = [{k: _nan_to_none(v) for k, v in row.items()} for row in self.aggregate]
        hists = {}
        for i, loss in enumerate(self.config.losses):
            entry = self.histograms.get(loss.label())
            if entry is not None:
                h = entry["histogram"]
                hists[loss.label()] = {"file": histogram_name(i), "mean": h.mean, "std": h.std, "count": h.count}
        doc = {"config": self.config.to_dict(), "aggregate": rows, "tau_star_histograms": hists}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def records_jsonl(self) -> str:
        return "".join(json.dumps({k: _nan_to_none(v) for k, v in r.items()}, sort_keys=True) + "\n" for r in self.records)


def _csv_cell(value):
    if isinstance(value, float):
        return "" if not math.isfinite(value) else repr(value)
    return value


def aggregate(config: ExperimentConfig, records: Sequence[dict[str, Any]]) -> list[dict[str, Any]]:
    rows = []
    for loss in config.losses:
        label = loss.label()
        mine = [r for r in records if r["loss"] == label]
        ok = [r for r in mine if r["success"]]
        row: dict[str, Any] = {
            "loss": label,
            "runs": len(mine),
            "success": len(ok),
            "out_of_support": sum(1 for r in ok if r.get("out_of_support")),
        }
        for key, col in (
            ("epochs_run", "epochs"),
            ("tau_star", "tau_star"),
            ("train_score_05", "train_score_05"),
            ("train_score_tau_star", "train_score_tau_star"),
            ("test_score_05", "test_score_05"),
            ("test_score_tau_star", "test_score_tau_star"),
        ):
            values = [r[key] for r in ok if r.get(key) is not None]
            row[f"{col}_mean"], row[f"{col}_std"] = _mean_std(values)
        rows.append(row)
    return rows


def threshold_distribution_report(
    config: ExperimentConfig, records: Sequence[dict[str, Any]], bins: int | None = None, grid_points: int = 201
) -> dict[str, dict[str, Any]]:
    """Histogram of optimal thresholds per loss, with the prior pdf sampled for overlays.

    Losses without any successful run are left out.
    """
    bins = bins or config.histogram_bins
    out = {}
    for loss in config.losses:
        label = loss.label()
        taus = [r["tau_star"] for r in records if r["loss"] == label and r["success"]]
        if not taus:
            continue
        hist = optimal_threshold_histogram(taus, bins)
        entry: dict[str, Any] = {"histogram": hist}
        if isinstance(loss, SolLoss):
            x = np.linspace(0.0, 1.0, grid_points)
            entry["pdf_x"] = x
            entry["pdf"] = np.asarray(pdf(loss.dist, x))
        out[label] = entry
    return out


def _repeat_worker(args):
    config, prep, repeat = args
    return _run_repeat(config, prep, repeat)


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Run every repeat and loss; results do not depend on ``jobs``."""
    try:
        prep = _prepare(config)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(str(exc)) from exc
    if config.resample["rule"] == "windows":
        # fail before any training if the windows overflow the data
        make_windows(prep.y.size, _window_plan(config))
    tasks = [(config, prep, r) for r in range(config.repeats)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_repeat = list(pool.map(_repeat_worker, tasks))
    else:
        per_repeat = [_repeat_worker(t) for t in tasks]
    records = [rec for chunk in per_repeat for rec in chunk]
    records.sort(key=lambda r: (r["repeat"], r["loss_index"]))
    return ExperimentResult(config, records, aggregate(config, records), threshold_distribution_report(config, records))


def histogram_name(loss_index: int) -> str:
    return f"histogram_{loss_index:02d}.csv"


def write_experiment(result: ExperimentResult, out_dir: str | Path) -> list[Path]:
    """aggregate.csv, aggregate.json, runs.jsonl and one histogram CSV per loss."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        path = out / name
        path.write_text(text)
        written.append(path)

    put("aggregate.csv", result.aggregate_csv())
    put("aggregate.json", result.aggregate_json())
    put("runs.jsonl", result.records_jsonl())
    for i, loss in enumerate(result.config.losses):
        entry = result.histograms.get(loss.label())
        if entry is None:
            continue
        put(histogram_name(i), entry["histogram"].to_csv())
    return written
