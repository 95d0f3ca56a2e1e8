import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from regbn.harness import (
    ExperimentSpec,
    derive_seeds,
    execute_run,
    run_matrix,
    summarize_accuracy,
    worker_count,
)
from regbn.mlp import TrainConfig
from regbn.synthetic import SynthParams


def tiny_spec(**kw):
    base = dict(
        experiment="I",
        normalizer="none",
        runs=2,
        base_seed=123,
        train=TrainConfig(epochs=1, batch_size=10),
        synth=SynthParams(experiment="I", n_per_group=30, rng_seed=0),
    )
    base.update(kw)
    return ExperimentSpec(**base)


def test_derive_seeds_deterministic_and_distinct():
    assert derive_seeds(0, 0) == derive_seeds(0, 0)
    assert derive_seeds(0, 0) != derive_seeds(0, 1)
    assert derive_seeds(0, 0) != derive_seeds(1, 0)


def test_spec_validation():
    with pytest.raises(ValueError):
        tiny_spec(normalizer="group-norm")
    with pytest.raises(ValueError):
        tiny_spec(runs=0)
    with pytest.raises(ValueError):
        tiny_spec(normalizer="regbn-fixed")  # missing fixed_lambda
    with pytest.raises(ValueError):
        tiny_spec(synth=SynthParams(experiment="II"))  # experiment mismatch


def test_untrained_cell_sits_at_chance(monkeypatch):
    monkeypatch.setenv("REGBN_WORKERS", "1")
    spec = ExperimentSpec(
        experiment="I", normalizer="none", runs=1, base_seed=0,
        train=TrainConfig(epochs=0),
    )
    res = execute_run(spec, 0)
    assert res.status == "ok"
    assert res.final_test_accuracy == pytest.approx(0.5, abs=0.05)


def test_run_matrix_files_and_aggregate(tmp_path, monkeypatch):
    monkeypatch.setenv("REGBN_WORKERS", "1")
    spec = tiny_spec(normalizer="regbn")
    agg = run_matrix(spec, tmp_path)

    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["aggregate.json", "run_000.json", "run_001.json", "timings.json"]

    # aggregate matches an independent recomputation from the run records
    accs = []
    for name in agg["run_files"]:
        rec = json.loads((tmp_path / name).read_text())
        assert rec["status"] == "ok"
        accs.append(rec["final_test_accuracy"])
        # traces: one lambda per training batch (60 train rows, batch 10)
        n_batches = 60 // 10
        assert len(rec["lambda_trace"]) == n_batches * spec.train.epochs
        assert len(rec["delta_w_trace"]) == len(rec["lambda_trace"])
        assert len(rec["epoch_losses"]) == spec.train.epochs
    assert agg["accuracy_mean"] == pytest.approx(float(np.mean(accs)))
    assert agg["accuracy_std"] == pytest.approx(float(np.std(accs, ddof=1)))
    assert agg["n_completed"] == 2 and agg["n_failed"] == 0
    assert agg["reference_accuracy"] == pytest.approx(0.875)


def test_rerun_reproduces_byte_identical_results(tmp_path, monkeypatch):
    monkeypatch.setenv("REGBN_WORKERS", "1")
    spec = tiny_spec(normalizer="regbn")
    run_matrix(spec, tmp_path / "a")
    run_matrix(spec, tmp_path / "b")
    for name in ("run_000.json", "run_001.json", "aggregate.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_worker_pool_does_not_change_results(tmp_path, monkeypatch):
    monkeypatch.setenv("REGBN_WORKERS", "1")
    run_matrix(tiny_spec(), tmp_path / "serial")
    monkeypatch.setenv("REGBN_WORKERS", "2")
    run_matrix(tiny_spec(), tmp_path / "pooled")
    for name in ("run_000.json", "run_001.json", "aggregate.json"):
        assert (tmp_path / "serial" / name).read_bytes() == (
            tmp_path / "pooled" / name
        ).read_bytes()


def test_diverged_run_recorded_and_excluded(tmp_path, monkeypatch):
    monkeypatch.setenv("REGBN_WORKERS", "1")
    spec = tiny_spec(
        train=TrainConfig(epochs=3, batch_size=10, optimizer="sgd", learning_rate=1e12)
    )
    agg = run_matrix(spec, tmp_path)
    assert agg["n_failed"] == 2
    assert agg["accuracy_mean"] is None
    assert agg["failed_runs"] == [0, 1]
    rec = json.loads((tmp_path / "run_000.json").read_text())
    assert rec["status"] == "failed"
    assert "non-finite" in rec["error"]


def test_failed_runs_excluded_from_stats():
    from regbn.harness import RunResult

    results = [
        RunResult(run_id=0, seed=1, final_test_accuracy=0.8),
        RunResult(run_id=1, seed=2, final_test_accuracy=0.9),
        RunResult(run_id=2, seed=3, status="failed", error="boom"),
    ]
    s = summarize_accuracy(results)
    assert s["n_completed"] == 2 and s["n_failed"] == 1
    assert s["accuracy_mean"] == pytest.approx(0.85)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("REGBN_WORKERS", "3")
    assert worker_count(10) == 3
    assert worker_count(2) == 2  # capped at run count
    monkeypatch.setenv("REGBN_WORKERS", "0")
    with pytest.raises(ValueError):
        worker_count(10)
    monkeypatch.delenv("REGBN_WORKERS")
    assert worker_count(1) == 1


def test_timings_kept_out_of_result_records(tmp_path, monkeypatch):
    monkeypatch.setenv("REGBN_WORKERS", "1")
    run_matrix(tiny_spec(), tmp_path)
    rec = json.loads((tmp_path / "run_000.json").read_text())
    agg = json.loads((tmp_path / "aggregate.json").read_text())
    assert "wall" not in json.dumps(rec)
    assert "wall" not in json.dumps(agg)
    timings = json.loads((tmp_path / "timings.json").read_text())
    assert set(timings["wall_time_s"]) == {"run_000", "run_001"}
