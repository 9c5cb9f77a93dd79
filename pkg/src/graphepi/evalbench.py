"""Dataset splitting, MAPE evaluation, dummy baseline, and runtime benchmarks.

All percentage errors are computed on the original count scale with exact-zero
targets excluded and the exclusion rate reported.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import DENOMINATOR_FLOOR
from .epicore import ContactPolicy, EpiParameters, N_AGE_GROUPS, N_STATES
from .metapop import MetapopGraph, simulate_metapopulation
from .scenarios import (
    COMPARTMENT_WIDTH,
    INPUT_DAYS,
    ScenarioDataset,
    encode_spatial,
    sample_initial_state,
)
from .surrogate import Checkpoint, GraphOperators, Model, model_from_checkpoint, predict_batch


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint, covering 80-10-10 index partition."""

    train: tuple[int, ...]
    validation: tuple[int, ...]
    test: tuple[int, ...]
    seed: int

    def __post_init__(self):
        all_indices = set(self.train) | set(self.validation) | set(self.test)
        total = len(self.train) + len(self.validation) + len(self.test)
        if len(all_indices) != total:
            raise SplitError("split parts overlap")


def split_dataset(n_samples: int, seed: int) -> SplitPlan:
    """Seeded shuffle, then 80/10/10 partition (within rounding)."""
    if n_samples < 10:
        raise SplitError(f"need at least 10 samples to split, got {n_samples}")
    order = np.random.default_rng(seed).permutation(n_samples)
    n_val = max(1, round(0.1 * n_samples))
    n_test = max(1, round(0.1 * n_samples))
    test = order[:n_test]
    validation = order[n_test : n_test + n_val]
    train = order[n_test + n_val :]
    return SplitPlan(
        train=tuple(int(i) for i in train),
        validation=tuple(int(i) for i in validation),
        test=tuple(int(i) for i in test),
        seed=seed,
    )


def mape_components(
    predictions: np.ndarray, targets: np.ndarray, floor: float = DENOMINATOR_FLOOR
) -> tuple[float, int, int]:
    """(sum of |y-yhat|/|y|, participating count, excluded count)."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    mask = np.abs(targets) > floor
    participating = int(mask.sum())
    excluded = targets.size - participating
    if participating == 0:
        return 0.0, 0, excluded
    ratio_sum = float(np.abs((predictions[mask] - targets[mask]) / targets[mask]).sum())
    return ratio_sum, participating, excluded


def mape_percent(predictions: np.ndarray, targets: np.ndarray) -> float:
    ratio_sum, count, _ = mape_components(predictions, targets)
    if count == 0:
        raise ValueError("all target entries excluded")
    return 100.0 * ratio_sum / count


def dummy_estimator(train_labels: np.ndarray) -> np.ndarray:
    """Pointwise mean trajectory over the training samples."""
    train_labels = np.asarray(train_labels)
    if train_labels.shape[0] == 0:
        raise ValueError("dummy estimator needs at least one training sample")
    return train_labels.mean(axis=0)


def evaluate_dummy(predictor: np.ndarray, eval_labels: np.ndarray) -> float:
    """MAPE of the constant mean predictor over held-out labels."""
    eval_labels = np.asarray(eval_labels)
    predictions = np.broadcast_to(predictor, eval_labels.shape)
    return mape_percent(predictions, eval_labels)


@dataclass
class EvaluationReport:
    overall_mape: float
    exclusion_rate: float
    n_samples: int
    per_node_mape: list | None = None
    cells: dict = field(default_factory=dict)  # (horizon, change count) -> MAPE

    def to_dict(self) -> dict:
        return {
            "overall_mape": self.overall_mape,
            "exclusion_rate": self.exclusion_rate,
            "n_samples": self.n_samples,
            "per_node_mape": self.per_node_mape,
            "cells": {f"h{h}_c{c}": v for (h, c), v in sorted(self.cells.items())},
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def evaluate_predictions(
    predictions: np.ndarray, labels: np.ndarray, metas=None, horizon: int | None = None
) -> EvaluationReport:
    """Report for stacked per-sample predictions against stacked labels.

    Spatial inputs have shape (samples, horizon, nodes, 48); non-spatial drop
    the node axis. Per-node MAPEs use per-node entry counts, so their
    count-weighted mean reproduces the overall MAPE exactly.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predictions.shape != labels.shape:
        raise ValueError(f"prediction shape {predictions.shape} != labels {labels.shape}")
    ratio_sum, count, excluded = mape_components(predictions, labels)
    if count == 0:
        raise ValueError("all target entries excluded")
    report = EvaluationReport(
        overall_mape=100.0 * ratio_sum / count,
        exclusion_rate=excluded / labels.size,
        n_samples=labels.shape[0],
    )
    spatial = labels.ndim == 4
    if spatial:
        n_nodes = labels.shape[2]
        per_node = []
        for node in range(n_nodes):
            node_sum, node_count, _ = mape_components(
                predictions[:, :, node, :], labels[:, :, node, :]
            )
            per_node.append(100.0 * node_sum / node_count if node_count else None)
        report.per_node_mape = per_node
    if metas is not None and horizon is not None:
        by_changes: dict[int, list[int]] = {}
        for i, meta in enumerate(metas):
            by_changes.setdefault(len(meta.get("change_points", [])), []).append(i)
        for changes, idx in sorted(by_changes.items()):
            cell_sum, cell_count, _ = mape_components(predictions[idx], labels[idx])
            if cell_count:
                report.cells[(horizon, changes)] = 100.0 * cell_sum / cell_count
    return report


def evaluate_model(
    checkpoint: Checkpoint,
    dataset: ScenarioDataset,
    indices,
    adjacency: np.ndarray | None = None,
) -> EvaluationReport:
    """Original-scale MAPE of a checkpoint over the given sample indices."""
    indices = list(indices)
    model = model_from_checkpoint(checkpoint)
    if dataset.config.spatial != checkpoint.spec.spatial:
        raise ValueError("dataset and checkpoint disagree on spatial encoding")
    operators = GraphOperators.from_adjacency(adjacency) if adjacency is not None else None
    features = np.stack(
        [
            dataset.samples[i].features if checkpoint.spec.spatial else dataset.samples[i].features.reshape(-1)
            for i in indices
        ]
    )
    labels = np.stack([dataset.samples[i].labels for i in indices])
    predictions = predict_batch(model, features, operators)
    metas = [dataset.samples[i].meta for i in indices]
    return evaluate_predictions(predictions, labels, metas, dataset.config.horizon)


@dataclass
class BenchCell:
    engine: str
    executions: int
    horizon: int
    changes: int
    median_seconds: float
    runs: tuple[float, ...]


@dataclass
class BenchReport:
    cells: list[BenchCell]

    def lookup(self, engine: str, executions: int, horizon: int, changes: int) -> BenchCell:
        for cell in self.cells:
            if (cell.engine, cell.executions, cell.horizon, cell.changes) == (
                engine,
                executions,
                horizon,
                changes,
            ):
                return cell
        raise KeyError((engine, executions, horizon, changes))

    def speedup(self, executions: int, horizon: int, changes: int) -> float:
        sim = self.lookup("simulator", executions, horizon, changes).median_seconds
        sur = self.lookup("surrogate", executions, horizon, changes).median_seconds
        return sim / sur

    def horizon_ratio(self, engine: str, executions: int = 1, changes: int = 0,
                      high: int = 90, low: int = 30) -> float:
        t_high = self.lookup(engine, executions, high, changes).median_seconds
        t_low = self.lookup(engine, executions, low, changes).median_seconds
        return t_high / t_low

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["engine", "executions", "horizon", "changes", "median_seconds", "runs"]
            )
            for cell in self.cells:
                writer.writerow(
                    [
                        cell.engine,
                        cell.executions,
                        cell.horizon,
                        cell.changes,
                        f"{cell.median_seconds:.6f}",
                        ";".join(f"{r:.6f}" for r in cell.runs),
                    ]
                )


def _bench_scenario(graph: MetapopGraph, params, base_policy, changes: int, seed: int):
    """Initial states, input-day states, and the policy for one bench cell."""
    from .scenarios import sample_change_points

    rng = np.random.default_rng(seed)
    states = np.zeros((graph.n_nodes, N_AGE_GROUPS, N_STATES))
    for i in range(graph.n_nodes):
        states[i] = sample_initial_state(
            "persistent_threat", rng, graph.populations[i], graph.age_shares[i]
        )
    change_points = []
    while len(change_points) != changes:
        change_points = sample_change_points(rng, max_changes=changes)
    policy = ContactPolicy(
        baseline=base_policy.baseline,
        change_points=tuple(change_points),
        ramp_width=base_policy.ramp_width,
    )
    spinup = simulate_metapopulation(graph, states, params, policy, INPUT_DAYS - 1)
    return states, spinup.values, policy

def bench_runtime(
    graph: MetapopGraph,
    models: dict[int, Model],
    params: EpiParameters | None = None,
    base_policy: ContactPolicy | None = None,
    executions=(1, 10, 100),
    horizons=(30, 60, 90),
    changes=(0, 3),
    reps: int = 5,
    seed: int = 0,
) -> BenchReport:
    """Median wall-clock of simulator vs surrogate over the benchmark grid.

    `models` maps each benchmarked horizon to the surrogate to run for it
    (output heads are horizon-specific). Surrogate timing covers encoding the
    five input days, the forward pass batched over the requested executions,
    and the inverse transform; the simulator runs its executions sequentially.
    Model load and the shared input-day spin-up are excluded.
    """
    from .epicore import default_policy

    if reps < 5:
        raise ValueError("benchmark medians need at least 5 repetitions")
    missing = [h for h in horizons if h not in models]
    if missing:
        raise ValueError(f"no surrogate model supplied for horizons {missing}")
    params = params or EpiParameters.covid_wild_type()
    base_policy = base_policy or default_policy()
    operators = GraphOperators.from_adjacency(graph.adjacency)
    cells = []
    for change_count in changes:
        states, input_days, policy = _bench_scenario(
            graph, params, base_policy, change_count, seed
        )
        for horizon in horizons:
            bench_model = models[horizon]
            for k in executions:

                def run_simulator():
                    for _ in range(k):
                        simulate_metapopulation(graph, states, params, policy, horizon)

                def run_surrogate():
                    feats = np.stack([encode_spatial(input_days, policy) for _ in range(k)])
                    return predict_batch(bench_model, feats, operators)

                for engine, fn in (("simulator", run_simulator), ("surrogate", run_surrogate)):
                    fn()  # untimed warmup: BLAS pools, code paths, caches
                    runs = []
                    for _ in range(reps):
                        start = time.perf_counter()
                        fn()
                        runs.append(time.perf_counter() - start)
                    cells.append(
                        BenchCell(
                            engine=engine,
                            executions=k,
                            horizon=horizon,
                            changes=change_count,
                            median_seconds=statistics.median(runs),
                            runs=tuple(runs),
                        )
                    )
    return BenchReport(cells=cells)


# Benchmark surrogate preset: wide and deep enough that the horizon-dependent
# output head is a small share of the forward cost on CPU, so the measured
# runtime stays near-constant in the horizon like the full-scale model.
BENCH_ARMA_LAYERS = 7
BENCH_ARMA_CHANNELS = 48
BENCH_ARMA_ITERATIONS = 8


def bench_models(input_width: int, horizons, seed: int = 0) -> dict[int, Model]:
    from .surrogate import arma_model_spec

    return {
        h: Model(
            arma_model_spec(
                input_width,
                h,
                n_layers=BENCH_ARMA_LAYERS,
                channels=BENCH_ARMA_CHANNELS,
                iterations=BENCH_ARMA_ITERATIONS,
            ),
            seed=seed,
        )
        for h in horizons
    }
