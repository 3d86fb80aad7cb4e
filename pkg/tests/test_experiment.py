import json
import math
from dataclasses import replace

import numpy as np
import pytest

from scoreloss.confusion import LabeledBatch
from scoreloss.distributions import raised_cosine, uniform
from scoreloss.experiment import (
    AGGREGATE_COLUMNS,
    ExperimentConfig,
    aggregate,
    load_table,
    run_experiment,
    run_seeds,
    threshold_distribution_report,
    write_experiment,
)
from scoreloss.ingest import DataError, clean_and_encode
from scoreloss.network import CrossEntropy, NetworkSpec, forward
from scoreloss.scores import ScoreKind, SolLoss
from scoreloss.threshold import scores_at, sweep
from scoreloss.train import fit


def small_config(**over):
    cfg = {
        "seed": 3,
        "data": {"source": "synthetic_adult", "n": 200, "seed": 1},
        "plan": {
            "label": "income",
            "label_positive": ">50K",
            "drop_columns": ["education"],
            "indicators": {"native-country": "United-States"},
        },
        "network": {"hidden": [4]},
        "train": {"max_epochs": 20, "patience": 5, "learning_rate": 0.01},
        "losses": [{"loss": "ce"}, {"loss": "sol", "score": "f1", "distribution": {"kind": "uniform"}}],
        "repeats": 2,
        "resample": {"rule": "subsample", "fraction": 0.8},
        "report_score": "f1",
    }
    cfg.update(over)
    return ExperimentConfig.from_dict(cfg)


@pytest.fixture(scope="module")
def small_result():
    return run_experiment(small_config())


def separable_csv(path, n=60):
    rng = np.random.default_rng(0)
    x = np.sort(rng.normal(size=n))
    y = (x > 0).astype(int)
    lines = ["x,y"] + [f"{float(a)!r},{b}" for a, b in zip(x, y)]
    path.write_text("\n".join(lines) + "\n")


class TestConfig:
    def test_round_trip(self):
        cfg = small_config()
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize(
        "over, match",
        [
            ({"repeats": 0}, "repeats"),
            ({"losses": []}, "empty"),
            ({"losses": [{"loss": "ce"}, {"loss": "ce"}]}, "duplicate"),
            ({"losses": [{"loss": "hinge"}]}, "unknown loss"),
            ({"losses": [{"loss": "sol", "score": "f1"}]}, "distribution"),
            ({"resample": {"rule": "bootstrap"}}, "resample"),
            ({"resample": {"rule": "subsample", "fraction": 1.5}}, "fraction"),
            ({"resample": {"rule": "windows", "train_length": 5}}, "windows"),
            ({"data": {"source": "excel"}}, "source"),
            ({"data": {"source": "csv"}}, "path"),
            ({"data": {"source": "synthetic_adult", "rows": 5}}, "unknown keys"),
            ({"train": {"max_epochs": 5, "patience": 10}}, "patience"),
            ({"train": {"epochs": 5}}, "train keys"),
            ({"colour": 1}, "experiment keys"),
            ({"network": {"width": 3}}, "network keys"),
        ],
    )
    def test_rejects(self, over, match):
        with pytest.raises(ValueError, match=match):
            small_config(**over)

    def test_missing_csv(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_table({"source": "csv", "path": str(tmp_path / "none.csv")})


class TestSeeds:
    def test_paired_and_distinct(self):
        rng_a, seed_a = run_seeds(0, 1)
        rng_b, seed_b = run_seeds(0, 1)
        assert seed_a == seed_b
        assert rng_a.random() == rng_b.random()
        assert run_seeds(0, 2)[1] != seed_a
        assert run_seeds(1, 1)[1] != seed_a


class TestRun:
    def test_record_layout(self, small_result):
        recs = small_result.records
        assert [(r["repeat"], r["loss_index"]) for r in recs] == [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert recs[0]["seed"] == recs[1]["seed"]
        assert all(r["sweep_portion"] == "train+validation" for r in recs)

    def test_aggregate_matches_records(self, small_result):
        for row in small_result.aggregate:
            ok = small_result.successful(row["loss"])
            assert row["success"] == len(ok)
            if ok:
                taus = [r["tau_star"] for r in ok]
                assert row["tau_star_mean"] == pytest.approx(np.mean(taus))
                assert row["tau_star_std"] == pytest.approx(np.std(taus))
            assert math.isnan(row["test_score_05_mean"])

    def test_ce_composition_oracle(self):
        cfg = small_config(repeats=1, losses=[{"loss": "ce"}])
        rec = run_experiment(cfg).records[0]
        rng, seed = run_seeds(cfg.seed, 0)
        enc = clean_and_encode(load_table(cfg.data, cfg.plan.label), cfg.plan)
        x, y = enc.features(), enc.labels()
        rows = np.sort(rng.choice(y.size, size=int(round(0.8 * y.size)), replace=False))
        spec = NetworkSpec.from_hidden(x.shape[1], (4,))
        report = fit(spec, replace(cfg.train, seed=seed), x[rows], y[rows])
        batch = LabeledBatch(forward(spec, report.final_weights, x[rows]), y[rows])
        sw = sweep(batch, ScoreKind.F1)
        assert rec["tau_star"] == sw.tau_star
        assert rec["train_score_tau_star"] == sw.best_score
        assert rec["train_score_05"] == scores_at(batch, ScoreKind.F1, [0.5])[0]
        assert rec["epochs_run"] == report.epochs_run

    def test_separable_reaches_perfect_tss(self, tmp_path):
        path = tmp_path / "sep.csv"
        separable_csv(path)
        cfg = ExperimentConfig.from_dict(
            {
                "data": {"source": "csv", "path": str(path)},
                "plan": {"label": "y"},
                "network": {"hidden": [4]},
                "train": {"max_epochs": 300, "patience": 50, "learning_rate": 0.05},
                "losses": [{"loss": "sol", "score": "tss", "distribution": {"kind": "uniform"}}],
                "repeats": 1,
                "resample": {"rule": "subsample", "fraction": 1.0},
                "report_score": "tss",
            }
        )
        rec = run_experiment(cfg).records[0]
        assert rec["success"]
        assert rec["train_score_tau_star"] == 1.0

    def test_windows_fill_test_scores(self):
        cfg = ExperimentConfig.from_dict(
            {
                "data": {"source": "synthetic_pollution", "n_hours": 400, "seed": 2, "positive_rate": 0.2},
                "plan": {"label": "label"},
                "network": {"hidden": [3]},
                "train": {"max_epochs": 10, "patience": 3, "learning_rate": 0.01},
                "losses": [{"loss": "ce"}],
                "repeats": 2,
                "resample": {"rule": "windows", "train_length": 200, "test_length": 100, "shift": 50},
                "report_score": "tss",
            }
        )
        res = run_experiment(cfg)
        for r in res.records:
            assert r["n_train"] == 200
            assert np.isfinite(r["test_score_05"]) and np.isfinite(r["test_score_tau_star"])

    def test_window_overflow_fails_fast(self):
        cfg = ExperimentConfig.from_dict(
            {
                "data": {"source": "synthetic_pollution", "n_hours": 100, "seed": 0},
                "plan": {"label": "label"},
                "network": {"hidden": [2]},
                "losses": [{"loss": "ce"}],
                "repeats": 3,
                "resample": {"rule": "windows", "train_length": 80, "test_length": 30, "shift": 5},
            }
        )
        with pytest.raises(DataError):
            run_experiment(cfg)

    def test_bad_plan_is_data_error(self):
        with pytest.raises(DataError):
            run_experiment(small_config(plan={"label": "income", "drop_columns": ["nope"]}))


class TestDeterminism:
    def test_bit_identical(self, small_result, tmp_path):
        again = run_experiment(small_config())
        assert again.records_jsonl() == small_result.records_jsonl()
        assert again.aggregate_csv() == small_result.aggregate_csv()

    def test_jobs_independent(self, small_result):
        par = run_experiment(small_config(), jobs=2)
        assert par.records_jsonl() == small_result.records_jsonl()


class TestAggregation:
    def test_failures_excluded(self):
        cfg = small_config()
        ce, sol = (loss.label() for loss in cfg.losses)
        recs = [
            {"loss": ce, "success": True, "tau_star": 0.2, "epochs_run": 4, "train_score_05": 0.5, "train_score_tau_star": 0.6},
            {"loss": ce, "success": False, "tau_star": 0.9, "epochs_run": 8, "train_score_05": 0.1, "train_score_tau_star": 0.1},
            {"loss": ce, "success": True, "tau_star": 0.4, "epochs_run": 6, "train_score_05": 0.7, "train_score_tau_star": 0.8},
            {"loss": sol, "success": False, "error": "boom"},
        ]
        rows = {r["loss"]: r for r in aggregate(cfg, recs)}
        assert rows[ce]["runs"] == 3 and rows[ce]["success"] == 2
        assert rows[ce]["tau_star_mean"] == pytest.approx(0.3)
        assert rows[ce]["tau_star_std"] == pytest.approx(0.1)
        assert rows[ce]["epochs_mean"] == 5.0
        assert rows[sol]["success"] == 0 and math.isnan(rows[sol]["tau_star_mean"])
        assert set(rows[ce]) == set(AGGREGATE_COLUMNS)

    def test_out_of_support_count(self):
        cfg = small_config(losses=[{"loss": "sol", "score": "f1", "distribution": {"kind": "raised_cosine", "mu": 0.5, "delta": 0.1}}])
        label = cfg.losses[0].label()
        recs = [{"loss": label, "success": True, "tau_star": t, "out_of_support": not (0.4 < t < 0.6)} for t in (0.3, 0.45, 0.7)]
        assert aggregate(cfg, recs)[0]["out_of_support"] == 2

    def test_out_of_support_flag_in_runs(self):
        res = run_experiment(
            small_config(
                repeats=1,
                losses=[{"loss": "sol", "score": "f1", "distribution": {"kind": "raised_cosine", "mu": 0.5, "delta": 0.1}}],
            )
        )
        rec = res.records[0]
        assert rec["out_of_support"] == (not 0.4 < rec["tau_star"] < 0.6)


class TestHistogramReport:
    def test_counts_and_pdf(self):
        cfg = small_config(
            losses=[{"loss": "ce"}, {"loss": "sol", "score": "f1", "distribution": {"kind": "raised_cosine", "mu": 0.5, "delta": 0.1}}]
        )
        ce, sol = (loss.label() for loss in cfg.losses)
        recs = [{"loss": sol, "success": True, "tau_star": t} for t in (0.41, 0.5, 0.52, 0.95)]
        recs.append({"loss": ce, "success": False})
        rep = threshold_distribution_report(cfg, recs, bins=10)
        assert ce not in rep
        h = rep[sol]["histogram"]
        assert h.count == 4
        assert h.density.sum() * 0.1 == pytest.approx(1.0)
        assert h.density[9] == pytest.approx(2.5)
        assert rep[sol]["pdf"].max() == pytest.approx(10.0)

    def test_written_files(self, small_result, tmp_path):
        paths = write_experiment(small_result, tmp_path)
        names = sorted(p.name for p in paths)
        assert names[:3] == ["aggregate.csv", "aggregate.json", "histogram_00.csv"]
        assert "runs.jsonl" in names
        doc = json.loads((tmp_path / "aggregate.json").read_text())
        assert doc["aggregate"][0]["test_score_05_mean"] is None
        lines = (tmp_path / "aggregate.csv").read_text().splitlines()
        assert lines[0].split(",") == list(AGGREGATE_COLUMNS)
        assert len(lines) == 3
