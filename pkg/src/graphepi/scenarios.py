"""Design-of-experiments scenario sampling and dataset files.

Two initial-condition regimes (low-prevalence outbreak, broad-prevalence
persistent threat), uniformly sampled contact change points, fixed-width
feature encodings for non-spatial (5x162) and spatial (n x 354) learners,
and a length-prefixed binary dataset container with NDJSON export.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .epicore import (
    EXPOSED,
    N_AGE_GROUPS,
    N_STATES,
    PRESYMPT,
    RECOVERED,
    SUSCEPTIBLE,
    SYMPT,
    ContactChangePoint,
    ContactPolicy,
    EpiModelError,
    EpiParameters,
    default_policy,
    integrate,
)
from .metapop import MetapopGraph, simulate_metapopulation

INPUT_DAYS = 5
COMPARTMENT_WIDTH = N_AGE_GROUPS * N_STATES  # 48
MAX_CHANGES = 3
CHANGE_WINDOW = 30
# 3 contact matrices + 3 change days + 3 reduction factors.
DESCRIPTOR_WIDTH = MAX_CHANGES * N_AGE_GROUPS * N_AGE_GROUPS + MAX_CHANGES + MAX_CHANGES
NONSPATIAL_WIDTH = COMPARTMENT_WIDTH + DESCRIPTOR_WIDTH  # 162
SPATIAL_WIDTH = INPUT_DAYS * COMPARTMENT_WIDTH + DESCRIPTOR_WIDTH  # 354

DATASET_MAGIC = b"EGS1"
DATASET_SCHEMA_VERSION = 1

REGIMES = ("outbreak", "persistent_threat")

# Outbreak bands are rates per 100k population.
OUTBREAK_SYMPTOMATIC_BAND = (7.0, 100.0)
OUTBREAK_EXPOSED_BAND = (25.0, 500.0)
OUTBREAK_PRESYMPT_BAND = (7.0, 100.0)

# Persistent-threat bands are population shares; the joint infected share is
# capped at 50%.
PERSISTENT_SYMPTOMATIC_BAND = (0.0001, 0.05)
PERSISTENT_EXPOSED_BAND = (0.0001, 0.225)
PERSISTENT_PRESYMPT_BAND = (0.0001, 0.225)
PERSISTENT_INFECTED_CAP = 0.5

DEFAULT_SINGLE_POPULATION = 100_000.0


class DatasetError(Exception):
    pass


class DatasetFormatError(DatasetError):
    """Corrupt or incompatible dataset file."""


class DatasetGenerationError(DatasetError):
    """A sample kept failing after the bounded number of retries."""


@dataclass(frozen=True)
class ScenarioConfig:
    """What to generate: regime, horizon, change-point budget, scale, seed."""

    regime: str
    horizon: int
    n_samples: int
    seed: int
    spatial: bool = False
    input_days: int = INPUT_DAYS
    max_changes: int = MAX_CHANGES
    change_window: int = CHANGE_WINDOW

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if self.horizon not in (30, 60, 90):
            raise ValueError("horizon must be 30, 60, or 90 days")
        if self.max_changes > 0 and self.horizon < self.change_window:
            raise ValueError("horizon must cover the change window when changes are allowed")
        if self.input_days != INPUT_DAYS:
            raise ValueError(f"input_days is fixed at {INPUT_DAYS}")
        if not 0 <= self.max_changes <= MAX_CHANGES:
            raise ValueError(f"max_changes must lie in [0, {MAX_CHANGES}]")
        if self.n_samples < 0:
            raise ValueError("n_samples must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "horizon": self.horizon,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "spatial": self.spatial,
            "input_days": self.input_days,
            "max_changes": self.max_changes,
            "change_window": self.change_window,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        return cls(**doc)


def _allocate_by_age(totals: dict[int, float], population: float, age_shares) -> np.ndarray:
    """Spread compartment totals across age groups proportionally to shares."""
    shares = np.asarray(age_shares, dtype=float)
    state = np.zeros((N_AGE_GROUPS, N_STATES))
    assigned = sum(totals.values())
    if assigned > population + 1e-9:
        raise ValueError("sampled compartments exceed the population")
    state[:, SUSCEPTIBLE] = (population - assigned) * shares
    for comp, total in totals.items():
        state[:, comp] = total * shares
    return state


def sample_outbreak_init(rng: np.random.Generator, population: float, age_shares=None) -> np.ndarray:
    """Low-prevalence start: a handful of cases per 100k population."""
    if population <= 0:
        raise ValueError("population must be positive")
    if age_shares is None:
        age_shares = np.full(N_AGE_GROUPS, 1 / N_AGE_GROUPS)
    scale = population / 100_000.0
    symptomatic = rng.uniform(*OUTBREAK_SYMPTOMATIC_BAND) * scale
    exposed = rng.uniform(*OUTBREAK_EXPOSED_BAND) * scale
    presymptomatic = rng.uniform(*OUTBREAK_PRESYMPT_BAND) * scale
    return _allocate_by_age(
        {SYMPT: symptomatic, EXPOSED: exposed, PRESYMPT: presymptomatic},
        population,
        age_shares,
    )


def sample_persistent_init(rng: np.random.Generator, population: float, age_shares=None) -> np.ndarray:
    """Broad-prevalence start: infected shares up to half the population,
    plus a uniformly random feasible recovered share."""
    if population <= 0:
        raise ValueError("population must be positive")
    if age_shares is None:
        age_shares = np.full(N_AGE_GROUPS, 1 / N_AGE_GROUPS)
    s_sy = rng.uniform(*PERSISTENT_SYMPTOMATIC_BAND)
    s_e = rng.uniform(*PERSISTENT_EXPOSED_BAND)
    s_ns = rng.uniform(*PERSISTENT_PRESYMPT_BAND)
    infected = s_sy + s_e + s_ns
    if infected > PERSISTENT_INFECTED_CAP:
        rescale = PERSISTENT_INFECTED_CAP / infected
        s_sy, s_e, s_ns = s_sy * rescale, s_e * rescale, s_ns * rescale
        infected = PERSISTENT_INFECTED_CAP
    s_r = rng.uniform(0.0, 1.0 - infected)
    return _allocate_by_age(
        {
            SYMPT: s_sy * population,
            EXPOSED: s_e * population,
            PRESYMPT: s_ns * population,
            RECOVERED: s_r * population,
        },
        population,
        age_shares,
    )


def sample_change_points(
    rng: np.random.Generator, max_changes: int = MAX_CHANGES, window: int = CHANGE_WINDOW
) -> list[ContactChangePoint]:
    """Uniform count in {0..max}, distinct sorted days in 1..window, r in [0,1)."""
    count = int(rng.integers(0, max_changes + 1))
    days = np.sort(rng.choice(np.arange(1, window + 1), size=count, replace=False))
    return [
        ContactChangePoint(day=float(day), reduction=float(rng.uniform(0.0, 1.0)))
        for day in days
    ]


def transform_log1p(x):
    x = np.asarray(x)
    if np.any(x < 0):
        raise ValueError("log1p transform requires nonnegative inputs")
    return np.log1p(x)


def inverse_log1p(y):
    return np.expm1(np.asarray(y))


def _descriptor_block(policy: ContactPolicy, dtype=np.float32) -> np.ndarray:
    """114 intervention descriptors; slots beyond the actual count stay zero."""
    block = np.zeros(DESCRIPTOR_WIDTH, dtype=dtype)
    mat_width = N_AGE_GROUPS * N_AGE_GROUPS
    for m, cp in enumerate(policy.change_points[:MAX_CHANGES]):
        block[m * mat_width : (m + 1) * mat_width] = policy.plateau(m).ravel()
        block[MAX_CHANGES * mat_width + m] = cp.day
        block[MAX_CHANGES * mat_width + MAX_CHANGES + m] = cp.reduction
    return block


def encode_nonspatial(day_states: np.ndarray, policy: ContactPolicy) -> np.ndarray:
    """(5, 6, 8) input days -> (5, 162): log1p counts then the descriptor block."""
    day_states = np.asarray(day_states)
    if day_states.shape != (INPUT_DAYS, N_AGE_GROUPS, N_STATES):
        raise ValueError(f"expected ({INPUT_DAYS}, 6, 8) input days, got {day_states.shape}")
    features = np.zeros((INPUT_DAYS, NONSPATIAL_WIDTH), dtype=np.float32)
    features[:, :COMPARTMENT_WIDTH] = transform_log1p(day_states.reshape(INPUT_DAYS, -1))
    features[:, COMPARTMENT_WIDTH:] = _descriptor_block(policy)
    return features


def decode_nonspatial_counts(features: np.ndarray) -> np.ndarray:
    """Inverse of the count block of encode_nonspatial."""
    return inverse_log1p(features[:, :COMPARTMENT_WIDTH]).reshape(
        INPUT_DAYS, N_AGE_GROUPS, N_STATES
    )


def encode_spatial(day_states: np.ndarray, policy: ContactPolicy) -> np.ndarray:
    """(5, n, 6, 8) input days -> (n, 354): per-node day-major log1p counts,
    then the intervention descriptors broadcast identically to every node."""
    day_states = np.asarray(day_states)
    if day_states.ndim != 4 or day_states.shape[0] != INPUT_DAYS:
        raise ValueError(f"expected ({INPUT_DAYS}, n, 6, 8) input days, got {day_states.shape}")
    n = day_states.shape[1]
    features = np.zeros((n, SPATIAL_WIDTH), dtype=np.float32)
    counts = day_states.transpose(1, 0, 2, 3).reshape(n, INPUT_DAYS * COMPARTMENT_WIDTH)
    features[:, : INPUT_DAYS * COMPARTMENT_WIDTH] = transform_log1p(counts)
    features[:, INPUT_DAYS * COMPARTMENT_WIDTH :] = _descriptor_block(policy)
    return features


@dataclass
class SampleRecord:
    """One scenario: encoded features, original-scale labels, provenance."""

    features: np.ndarray
    labels: np.ndarray
    meta: dict


@dataclass
class ScenarioDataset:
    config: ScenarioConfig
    samples: list[SampleRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    @property
    def feature_shape(self):
        return self.samples[0].features.shape if self.samples else None

    @property
    def label_shape(self):
        return self.samples[0].labels.shape if self.samples else None


def sample_initial_state(regime: str, rng, population: float, age_shares=None) -> np.ndarray:
    if regime == "outbreak":
        return sample_outbreak_init(rng, population, age_shares)
    return sample_persistent_init(rng, population, age_shares)


def _simulate_sample(
    config: ScenarioConfig,
    index: int,
    graph: MetapopGraph | None,
    params: EpiParameters,
    base_policy: ContactPolicy,
    retry: int,
) -> SampleRecord:
    sub_seed = config.seed ^ index
    rng = np.random.default_rng((sub_seed, retry))
    changes = sample_change_points(rng, config.max_changes, config.change_window)
    policy = ContactPolicy(
        baseline=base_policy.baseline,
        change_points=tuple(changes),
        ramp_width=base_policy.ramp_width,
    )
    total_days = config.input_days - 1 + config.horizon
    meta = {
        "index": index,
        "sub_seed": sub_seed,
        "regime": config.regime,
        "change_points": [{"day": cp.day, "reduction": cp.reduction} for cp in changes],
        "horizon": config.horizon,
    }
    if config.spatial:
        if graph is None:
            raise ValueError("spatial datasets require a graph")
        states = np.zeros((graph.n_nodes, N_AGE_GROUPS, N_STATES))
        for i in range(graph.n_nodes):
            states[i] = sample_initial_state(
                config.regime, rng, graph.populations[i], graph.age_shares[i]
            )
        traj = simulate_metapopulation(graph, states, params, policy, total_days)
        features = encode_spatial(traj.values[: config.input_days], policy)
        labels = (
            traj.values[config.input_days :]
            .reshape(config.horizon, graph.n_nodes, COMPARTMENT_WIDTH)
            .astype(np.float32)
        )
    else:
        state = sample_initial_state(config.regime, rng, DEFAULT_SINGLE_POPULATION)
        traj = integrate(state, params, policy, total_days)
        features = encode_nonspatial(traj.values[: config.input_days], policy)
        labels = (
            traj.values[config.input_days :]
            .reshape(config.horizon, COMPARTMENT_WIDTH)
            .astype(np.float32)
        )
    return SampleRecord(features=features, labels=labels, meta=meta)


MAX_SAMPLE_RETRIES = 3


def _generate_sample(config, index, graph, params, base_policy) -> SampleRecord:
    errors = []
    for retry in range(MAX_SAMPLE_RETRIES + 1):
        try:
            return _simulate_sample(config, index, graph, params, base_policy, retry)
        except EpiModelError as exc:
            errors.append(str(exc))
    raise DatasetGenerationError(f"sample {index} failed {len(errors)} times: {errors}")


def generate_dataset(
    config: ScenarioConfig,
    graph: MetapopGraph | None = None,
    params: EpiParameters | None = None,
    base_policy: ContactPolicy | None = None,
    workers: int = 1,
) -> ScenarioDataset:
    """Run the simulator for every sample of the config, deterministically.

    Sample i draws from a generator seeded with (seed XOR i, retry), so the
    result is a pure function of the config regardless of worker count.
    """
    params = params or EpiParameters.covid_wild_type()
    base_policy = base_policy or default_policy()
    indices = range(config.n_samples)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(
                pool.map(lambda i: _generate_sample(config, i, graph, params, base_policy), indices)
            )
    else:
        samples = [_generate_sample(config, i, graph, params, base_policy) for i in indices]
    return ScenarioDataset(config=config, samples=samples)


def _meta_bytes(meta: dict) -> bytes:
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()


def write_dataset(path, dataset: ScenarioDataset) -> None:
    """Binary container: magic, length-prefixed JSON header, then per record a
    u32 payload length followed by f32 features, f32 labels, JSON meta."""
    header = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "config": dataset.config.to_dict(),
        "count": len(dataset.samples),
        "feature_shape": list(dataset.feature_shape or ()),
        "label_shape": list(dataset.label_shape or ()),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for record in dataset.samples:
            features = np.ascontiguousarray(record.features, dtype="<f4").tobytes()
            labels = np.ascontiguousarray(record.labels, dtype="<f4").tobytes()
            meta = _meta_bytes(record.meta)
            fh.write(struct.pack("<I", len(features) + len(labels) + len(meta)))
            fh.write(features)
            fh.write(labels)
            fh.write(meta)


def read_dataset(path) -> ScenarioDataset:
    raw = Path(path).read_bytes()
    if raw[:4] != DATASET_MAGIC:
        raise DatasetFormatError("not a scenario dataset (bad magic)")
    (header_len,) = struct.unpack_from("<I", raw, 4)
    try:
        header = json.loads(raw[8 : 8 + header_len])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError("corrupt header") from exc
    if header.get("schema_version") != DATASET_SCHEMA_VERSION:
        raise DatasetFormatError(
            f"unsupported schema version {header.get('schema_version')}"
        )
    config = ScenarioConfig.from_dict(header["config"])
    feature_shape = tuple(header["feature_shape"])
    label_shape = tuple(header["label_shape"])
    feat_bytes = int(np.prod(feature_shape)) * 4 if feature_shape else 0
    label_bytes = int(np.prod(label_shape)) * 4 if label_shape else 0
    offset = 8 + header_len
    samples = []
    for _ in range(header["count"]):
        if offset + 4 > len(raw):
            raise DatasetFormatError("truncated record stream")
        (payload_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        payload = raw[offset : offset + payload_len]
        if len(payload) != payload_len:
            raise DatasetFormatError("truncated record payload")
        offset += payload_len
        features = np.frombuffer(payload[:feat_bytes], dtype="<f4").reshape(feature_shape)
        labels = np.frombuffer(
            payload[feat_bytes : feat_bytes + label_bytes], dtype="<f4"
        ).reshape(label_shape)
        meta = json.loads(payload[feat_bytes + label_bytes :])
        samples.append(SampleRecord(features=features.copy(), labels=labels.copy(), meta=meta))
    return ScenarioDataset(config=config, samples=samples)


def export_ndjson(dataset: ScenarioDataset, path) -> None:
    """One JSON object per record mirroring the binary layout."""
    with open(path, "w") as fh:
        for record in dataset.samples:
            fh.write(
                json.dumps(
                    {
                        "meta": record.meta,
                        "features": record.features.tolist(),
                        "labels": record.labels.tolist(),
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
            )
            fh.write("\n")
