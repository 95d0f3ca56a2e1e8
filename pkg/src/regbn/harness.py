"""Experiment runner for the synthetic confounded benchmark.

One cell = (experiment, normalizer); a cell executes several independent
seeded runs (fresh data, fresh init per run), writes one JSON record per run
plus an aggregate, and reports mean and standard deviation of the test
accuracy against the analytic reference.

Determinism contract: per-run metrics depend only on the spec and the
base seed, so re-running a cell reproduces byte-identical JSON. Wall
times are kept out of the result records and written to a separate
timings file.
"""

from __future__ import annotations

import json
import multiprocessing
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .layer import RegBN, RegBNConfig
from .mlp import DivergenceError, MlpModel, TrainConfig, evaluate, train
from .synthetic import SynthParams, bayes_reference, generate

SCHEMA_VERSION = 1
NORMALIZERS = ("none", "bn", "regbn", "regbn-fixed")
WORKERS_ENV_VAR = "REGBN_WORKERS"

FIXED_LAMBDA_GRID = (1.0, 100.0, 1000.0)
BATCH_SIZE_SWEEP = (10, 20, 30, 40, 50, 100)


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str = "I"
    normalizer: str = "none"
    fixed_lambda: float | None = None
    runs: int = 10
    base_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthParams | None = None
    collect_val: bool = False
    # Benchmark cells run the layer with the feature-standardization
    # pre-step on: the trained encoder's feature scale is pinned, so the
    # unit-norm weight budget keeps its grip across all of training.
    regbn_config: RegBNConfig = field(
        default_factory=lambda: RegBNConfig(standardize_inputs=True)
    )

    def __post_init__(self) -> None:
        if self.normalizer not in NORMALIZERS:
            raise ValueError(f"normalizer must be one of {NORMALIZERS}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.normalizer == "regbn-fixed" and not (
            self.fixed_lambda is not None and self.fixed_lambda > 0
        ):
            raise ValueError("regbn-fixed needs a positive fixed_lambda")
        if self.synth is None:
            object.__setattr__(self, "synth", SynthParams(experiment=self.experiment))
        elif self.synth.experiment != self.experiment:
            raise ValueError("synth params disagree with the spec experiment")


@dataclass
class RunResult:
    run_id: int
    seed: int
    status: str = "ok"
    final_test_accuracy: float | None = None
    final_test_loss: float | None = None
    final_train_loss: float | None = None
    epoch_losses: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    lambda_trace: list[float] = field(default_factory=list)
    delta_w_trace: list[float] = field(default_factory=list)
    error: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


def derive_seeds(base_seed: int, run_id: int) -> tuple[int, int, int]:
    """(data, model, shuffle) seeds for one run; stable across processes."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(run_id,))
    a, b, c = ss.generate_state(3)
    return int(a), int(b), int(c)


def _build_regbn(spec: ExperimentSpec) -> RegBN | None:
    if spec.normalizer == "regbn":
        return RegBN(replace(spec.regbn_config, fixed_lambda=None))
    if spec.normalizer == "regbn-fixed":
        return RegBN(replace(spec.regbn_config, fixed_lambda=spec.fixed_lambda))
    return None


def execute_run(spec: ExperimentSpec, run_id: int) -> RunResult:
    """One fully seeded run: generate data, train, evaluate."""
    data_seed, model_seed, shuffle_seed = derive_seeds(spec.base_seed, run_id)
    out = RunResult(run_id=run_id, seed=data_seed)
    try:
        params = replace(spec.synth, rng_seed=data_seed)
        train_split, test_split = generate(params)

        slot = "none" if spec.normalizer == "none" else (
            "bn" if spec.normalizer == "bn" else "regbn"
        )
        model = MlpModel(slot=slot, rng=np.random.default_rng(model_seed))
        regbn = _build_regbn(spec)
        cfg = replace(spec.train, rng_seed=shuffle_seed)

        res = train(model, train_split, cfg, regbn=regbn,
                    eval_split=test_split if spec.collect_val else None)
        metrics = evaluate(model, test_split, regbn=regbn)

        out.final_test_accuracy = metrics["accuracy"]
        out.final_test_loss = metrics["loss"]
        out.final_train_loss = res.epoch_losses[-1] if res.epoch_losses else None
        out.epoch_losses = res.epoch_losses
        out.val_accuracy = res.val_accuracy
        out.lambda_trace = res.lambda_trace
        out.delta_w_trace = res.delta_w_trace
    except DivergenceError as exc:
        out.status = "failed"
        out.error = str(exc)
    return out


def _worker(args: tuple[ExperimentSpec, int]) -> tuple[RunResult, float]:
    spec, run_id = args
    t0 = time.perf_counter()
    res = execute_run(spec, run_id)
    return res, time.perf_counter() - t0


def worker_count(runs: int) -> int:
    env = os.environ.get(WORKERS_ENV_VAR)
    if env is not None:
        n = int(env)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV_VAR} must be >= 1, got {n}")
        return min(n, runs)
    return min(os.cpu_count() or 1, runs)


def _run_all(spec: ExperimentSpec) -> tuple[list[RunResult], list[float]]:
    jobs = [(spec, i) for i in range(spec.runs)]
    n_workers = worker_count(spec.runs)
    if n_workers == 1:
        pairs = [_worker(j) for j in jobs]
    else:
        with multiprocessing.Pool(n_workers) as pool:
            pairs = pool.map(_worker, jobs)
    pairs.sort(key=lambda p: p[0].run_id)
    return [p[0] for p in pairs], [p[1] for p in pairs]


def summarize_accuracy(results: list[RunResult]) -> dict:
    """Mean and sample std of accuracy over completed runs."""
    acc = [r.final_test_accuracy for r in results if r.status == "ok"]
    return {
        "n_completed": len(acc),
        "n_failed": len(results) - len(acc),
        "accuracy_mean": float(np.mean(acc)) if acc else None,
        "accuracy_std": float(np.std(acc, ddof=1)) if len(acc) > 1 else 0.0,
    }


def _dump_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _spec_json(spec: ExperimentSpec) -> dict:
    return asdict(spec)  # nested dataclasses flatten to plain dicts


def run_matrix(spec: ExperimentSpec, out_dir: str | Path) -> dict:
    """Execute all runs of one cell and write run/aggregate JSON files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results, times = _run_all(spec)

    for r in results:
        _dump_json(out / f"run_{r.run_id:03d}.json", r.to_json())

    aggregate = {
        "schema_version": SCHEMA_VERSION,
        "spec": _spec_json(spec),
        "reference_accuracy": bayes_reference(spec.synth),
        **summarize_accuracy(results),
        "run_files": [f"run_{r.run_id:03d}.json" for r in results],
        "failed_runs": [r.run_id for r in results if r.status != "ok"],
    }
    _dump_json(out / "aggregate.json", aggregate)
    _dump_json(out / "timings.json", {
        "wall_time_s": {f"run_{r.run_id:03d}": t for r, t in zip(results, times)},
        "total_s": sum(times),
    })
    return aggregate


def _epoch_quartiles(lambda_trace: list[float], epochs: int) -> list[list[float]]:
    """Per-epoch [q1, median, q3] of the accepted-lambda trace."""
    if epochs == 0 or not lambda_trace:
        return []
    per_epoch = len(lambda_trace) // epochs
    out = []
    for e in range(epochs):
        chunk = np.asarray(lambda_trace[e * per_epoch : (e + 1) * per_epoch])
        if chunk.size == 0:
            out.append([float("nan")] * 3)
        else:
            q1, q2, q3 = np.percentile(chunk, [25, 50, 75])
            out.append([float(q1), float(q2), float(q3)])
    return out


def ablation_lambda(spec: ExperimentSpec, out_dir: str | Path) -> dict:
    """Adaptive search vs the fixed-strength grid, with per-epoch traces."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [("adaptive", None)] + [(f"fixed_{v:g}", v) for v in FIXED_LAMBDA_GRID]

    report: dict = {
        "schema_version": SCHEMA_VERSION,
        "experiment": spec.experiment,
        "reference_accuracy": bayes_reference(spec.synth),
        "cells": {},
    }
    for name, lam in cells:
        cell_spec = replace(
            spec,
            normalizer="regbn" if lam is None else "regbn-fixed",
            fixed_lambda=lam,
            collect_val=True,
        )
        results, _ = _run_all(cell_spec)
        report["cells"][name] = {
            **summarize_accuracy(results),
            "fixed_lambda": lam,
            "val_accuracy": [r.val_accuracy for r in results],
            "lambda_epoch_quartiles": [
                _epoch_quartiles(r.lambda_trace, cell_spec.train.epochs) for r in results
            ],
        }
    _dump_json(out / "ablation_lambda.json", report)
    return report


def ablation_batchsize(spec: ExperimentSpec, out_dir: str | Path,
                       sizes: tuple[int, ...] = BATCH_SIZE_SWEEP) -> dict:
    """Accuracy of the adaptive normalizer across batch sizes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report: dict = {
        "schema_version": SCHEMA_VERSION,
        "experiment": spec.experiment,
        "reference_accuracy": bayes_reference(spec.synth),
        "cells": {},
    }
    for bs in sizes:
        cell_spec = replace(
            spec,
            normalizer="regbn",
            fixed_lambda=None,
            train=replace(spec.train, batch_size=bs),
        )
        results, _ = _run_all(cell_spec)
        report["cells"][str(bs)] = {"batch_size": bs, **summarize_accuracy(results)}
    _dump_json(out / "ablation_batchsize.json", report)
    return report
