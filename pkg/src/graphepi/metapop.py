"""Mobility graph of regions and the coupled metapopulation simulation.

Each node runs the single-region compartment model; commuters move along
mobility edges for the second half of every day and return home at the day
boundary. Severe, critical, and dead compartments never travel.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sparse
from scipy.integrate import solve_ivp

from .epicore import (
    DEFAULT_AGE_SHARES,
    IMMOBILE_STATES,
    N_AGE_GROUPS,
    N_STATES,
    ContactPolicy,
    DailyTrajectory,
    EpiParameters,
    StepSizeUnderflowError,
    _clamp_negatives,
    _derivatives,
    contact_rate,
)

MOBILE_STATES = tuple(s for s in range(N_STATES) if s not in IMMOBILE_STATES)

# Weights are persons/day; the synthetic generator draws them log-uniformly
# from this range.
SYNTH_WEIGHT_RANGE = (1.0, 1e4)
SYNTH_POPULATION_RANGE = (50_000.0, 500_000.0)


class MobilityFormatError(ValueError):
    """Malformed mobility or population CSV."""


def validate_mobility(weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
        raise MobilityFormatError(f"mobility matrix must be square, got {weights.shape}")
    if weights.shape[0] < 2:
        raise MobilityFormatError("mobility matrix needs at least two regions")
    if np.any(weights < 0):
        raise MobilityFormatError("mobility weights must be nonnegative")
    if np.any(np.diag(weights) != 0):
        raise MobilityFormatError("mobility diagonal must be zero")
    return weights


def load_mobility(path) -> np.ndarray:
    """Parse an n x n CSV of commuter weights."""
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise MobilityFormatError(f"row {i}: non-numeric entry") from exc
    if not rows:
        raise MobilityFormatError("empty mobility file")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise MobilityFormatError(f"row {i}: expected {width} columns, got {len(row)}")
    matrix = np.array(rows)
    if matrix.shape[0] != matrix.shape[1]:
        raise MobilityFormatError(
            f"expected a square matrix, got {matrix.shape[0]} rows x {matrix.shape[1]} columns"
        )
    return validate_mobility(matrix)


def save_mobility(path, weights: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(weights):
            writer.writerow([repr(float(v)) for v in row])


def synth_mobility(n: int, target_density: float, seed: int) -> np.ndarray:
    """Seeded random commuter matrix with an exact off-diagonal density.

    Edge count is round(density * n * (n-1)); weights are log-uniform over
    SYNTH_WEIGHT_RANGE.
    """
    if not 0 < target_density <= 1:
        raise ValueError("target_density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    off_diag = [(i, j) for i in range(n) for j in range(n) if i != j]
    k = int(round(target_density * len(off_diag)))
    chosen = rng.choice(len(off_diag), size=k, replace=False)
    lo, hi = np.log(SYNTH_WEIGHT_RANGE[0]), np.log(SYNTH_WEIGHT_RANGE[1])
    weights = np.zeros((n, n))
    for idx, w in zip(chosen, np.exp(rng.uniform(lo, hi, size=k))):
        i, j = off_diag[idx]
        weights[i, j] = w
    return weights


def synth_populations(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Log-uniform node populations plus jittered age shares (rows sum to 1)."""
    rng = np.random.default_rng(seed)
    lo, hi = np.log(SYNTH_POPULATION_RANGE[0]), np.log(SYNTH_POPULATION_RANGE[1])
    populations = np.exp(rng.uniform(lo, hi, size=n))
    base = np.asarray(DEFAULT_AGE_SHARES)
    shares = base * rng.uniform(0.85, 1.15, size=(n, N_AGE_GROUPS))
    shares /= shares.sum(axis=1, keepdims=True)
    return populations, shares


def adjacency_from_mobility(weights: np.ndarray, symmetrize: bool = False) -> np.ndarray:
    """Binary adjacency: 1 wherever the commuter weight is positive.

    With `symmetrize`, an edge in either direction yields edges both ways.
    """
    adjacency = (np.asarray(weights) > 0).astype(np.int8)
    if symmetrize:
        adjacency = np.maximum(adjacency, adjacency.T)
    return adjacency


def normalize_adjacency(adjacency: np.ndarray) -> sparse.csr_matrix:
    """Symmetric degree normalization D^-1/2 A D^-1/2 as sparse CSR.

    Isolated nodes keep all-zero rows and columns.
    """
    adjacency = np.asarray(adjacency, dtype=float)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise ValueError("adjacency must be square")
    degrees = adjacency.sum(axis=1)
    inv_sqrt = np.zeros_like(degrees)
    nonzero = degrees > 0
    inv_sqrt[nonzero] = 1.0 / np.sqrt(degrees[nonzero])
    normalized = adjacency * inv_sqrt[:, None] * inv_sqrt[None, :]
    return sparse.csr_matrix(normalized)


@dataclass
class MetapopGraph:
    """Regions with populations and age shares, coupled by commuter mobility."""

    populations: np.ndarray
    age_shares: np.ndarray
    mobility: np.ndarray
    adjacency: np.ndarray
    normalized_adjacency: sparse.csr_matrix

    @property
    def n_nodes(self) -> int:
        return len(self.populations)

    @property
    def density(self) -> float:
        n = self.n_nodes
        return float(np.count_nonzero(self.adjacency)) / (n * (n - 1))

    def node_age_populations(self) -> np.ndarray:
        return self.populations[:, None] * self.age_shares

    def summary(self) -> dict:
        degrees = np.asarray(self.adjacency.sum(axis=1)).ravel()
        hist, edges = np.histogram(degrees, bins=10)
        return {
            "n_nodes": self.n_nodes,
            "density": self.density,
            "total_population": float(self.populations.sum()),
            "degree_histogram": {
                "counts": hist.tolist(),
                "bin_edges": edges.tolist(),
            },
        }


def build_graph(populations, age_shares, mobility, symmetrize: bool = False) -> MetapopGraph:
    populations = np.asarray(populations, dtype=float)
    age_shares = np.asarray(age_shares, dtype=float)
    mobility = validate_mobility(mobility)
    n = mobility.shape[0]
    if populations.shape != (n,):
        raise ValueError(f"expected {n} populations, got {populations.shape}")
    if age_shares.shape != (n, N_AGE_GROUPS):
        raise ValueError(f"expected age shares of shape ({n}, 6), got {age_shares.shape}")
    if np.any(np.abs(age_shares.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("age shares must sum to one per node")
    adjacency = adjacency_from_mobility(mobility, symmetrize=symmetrize)
    return MetapopGraph(
        populations=populations,
        age_shares=age_shares,
        mobility=mobility,
        adjacency=adjacency,
        normalized_adjacency=normalize_adjacency(adjacency),
    )


def synth_graph(n: int, target_density: float, seed: int) -> MetapopGraph:
    populations, shares = synth_populations(n, seed)
    return build_graph(populations, shares, synth_mobility(n, target_density, seed + 1))


def load_populations(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a population CSV with rows (node_id, population, share0..share5)."""
    pops, shares = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != 2 + N_AGE_GROUPS:
                raise MobilityFormatError(f"row {i}: expected {2 + N_AGE_GROUPS} columns")
            try:
                pops.append(float(row[1]))
            except ValueError:
                if i == 0:
                    continue  # header
                raise MobilityFormatError(f"row {i}: non-numeric population") from None
            shares.append([float(v) for v in row[2:]])
    return np.array(pops), np.array(shares)


def save_populations(path, populations, age_shares) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "population"] + [f"share_{i}" for i in range(N_AGE_GROUPS)])
        for i, (pop, shares) in enumerate(zip(populations, age_shares)):
            writer.writerow([i, repr(float(pop))] + [repr(float(s)) for s in shares])


def commuter_fractions(graph: MetapopGraph) -> sparse.csr_matrix:
    """Per-edge fraction of a node's mobile population that commutes out.

    fraction(i->j) = min(0.5 * w_ij / N_i, 0.5 / outdeg_i), so at most half
    of any compartment ever leaves node i within a day.
    """
    weights = graph.mobility
    outdeg = np.count_nonzero(weights > 0, axis=1)
    frac = np.zeros_like(weights)
    rows, cols = np.nonzero(weights)
    frac[rows, cols] = np.minimum(
        0.5 * weights[rows, cols] / graph.populations[rows],
        0.5 / outdeg[rows],
    )
    return sparse.csr_matrix(frac)


@dataclass
class MetapopTrajectory:
    """Day-indexed compartment values across all nodes: (horizon+1, n, 6, 8)."""

    days: np.ndarray
    values: np.ndarray
    clamped: int = 0

    def node(self, i: int) -> DailyTrajectory:
        return DailyTrajectory(days=self.days, values=self.values[:, i], clamped=0)


def _integrate_window(states, t0, params, policy, rtol, atol):
    n = states.shape[0]

    def f(t, y):
        return _derivatives(
            y.reshape(n, N_AGE_GROUPS, N_STATES), params, contact_rate(policy, t)
        ).ravel()

    sol = solve_ivp(f, (t0, t0 + 0.5), states.ravel(), method="RK45", rtol=rtol, atol=atol)
    if not sol.success:
        raise StepSizeUnderflowError(sol.message)
    return sol.y[:, -1].reshape(n, N_AGE_GROUPS, N_STATES)


def simulate_metapopulation(
    graph: MetapopGraph,
    initial_states: np.ndarray,
    params: EpiParameters,
    policy: ContactPolicy,
    horizon: int,
    rtol: float = 1e-6,
    atol: float = 1e-8,
) -> MetapopTrajectory:
    """Coupled simulation over `horizon` days with daily commuting.

    Day cycle: half a day at home, commuters move out along mobility edges,
    half a day mixed into the destination, then commuters return. Returned
    mass is drawn pro rata from the destination's mobile compartments, so a
    commuter who progressed to a severe state effectively stays. Global
    per-age population is conserved exactly.
    """
    initial_states = np.asarray(initial_states, dtype=float)
    n = graph.n_nodes
    if initial_states.shape != (n, N_AGE_GROUPS, N_STATES):
        raise ValueError(f"initial states must have shape ({n}, 6, 8)")
    if horizon < 1:
        raise ValueError("horizon must be at least one day")

    frac = commuter_fractions(graph)
    out_share = np.asarray(frac.sum(axis=1)).ravel()  # share of node leaving home
    mobile = np.array(MOBILE_STATES)

    values = np.empty((horizon + 1, n, N_AGE_GROUPS, N_STATES))
    values[0] = initial_states
    clamped_total = 0
    state = initial_states.copy()

    for day in range(horizon):
        # First half-day: everyone at home.
        state = _integrate_window(state, float(day), params, policy, rtol, atol)

        # Commuters depart: per-edge share of every mobile compartment.
        mobile_block = state[:, :, mobile]  # (n, 6, n_mobile)
        flat = mobile_block.reshape(n, -1)
        inflow = (frac.T @ flat).reshape(mobile_block.shape)
        merged = state.copy()
        merged[:, :, mobile] = mobile_block * (1.0 - out_share)[:, None, None] + inflow

        # Reference for the pro-rata return: mobile mass at window start.
        merged_mobile_ref = merged[:, :, mobile].reshape(n, -1)

        # Second half-day: commuters mixed into their destination.
        merged = _integrate_window(merged, day + 0.5, params, policy, rtol, atol)

        after_mobile = merged[:, :, mobile].reshape(n, -1)
        with np.errstate(invalid="ignore", divide="ignore"):
            gain = np.where(merged_mobile_ref > 0, after_mobile / merged_mobile_ref, 0.0)
        # Mass flowing back: each sender recovers its sent share of the
        # destination's surviving mobile mass.
        returned = (frac @ gain.reshape(n, -1)).reshape(gain.shape) * (
            state[:, :, mobile].reshape(n, -1)
        )
        inflow_flat = inflow.reshape(n, -1)
        removed = gain * inflow_flat

        final_mobile = after_mobile - removed + returned
        state = merged
        state[:, :, mobile] = final_mobile.reshape(n, N_AGE_GROUPS, len(mobile))

        state, clamped, _ = _clamp_negatives(state)
        clamped_total += clamped
        values[day + 1] = state

    values, clamped, _ = _clamp_negatives(values)
    return MetapopTrajectory(days=np.arange(horizon + 1), values=values, clamped=clamped_total)


def save_graph(directory, graph: MetapopGraph) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_mobility(directory / "mobility.csv", graph.mobility)
    save_populations(directory / "populations.csv", graph.populations, graph.age_shares)
    (directory / "summary.json").write_text(json.dumps(graph.summary(), indent=2))


def load_graph(directory) -> MetapopGraph:
    directory = Path(directory)
    mobility = load_mobility(directory / "mobility.csv")
    populations, shares = load_populations(directory / "populations.csv")
    return build_graph(populations, shares, mobility)
