"""Shared fixtures: the desk-scale 20-node graph and its scenario datasets.

Dataset generation is the expensive part of the acceptance suite, so the
spatial datasets are generated once per session and shared between the dummy
ordering and training criteria.
"""

import numpy as np
import pytest

from graphepi.metapop import synth_graph
from graphepi.scenarios import ScenarioConfig, generate_dataset

DESK_NODES = 20
DESK_HORIZON = 30


@pytest.fixture(scope="session")
def desk_graph():
    return synth_graph(DESK_NODES, 0.25, seed=42)


@pytest.fixture(scope="session")
def persistent_dataset(desk_graph):
    config = ScenarioConfig(
        regime="persistent_threat",
        horizon=DESK_HORIZON,
        n_samples=300,
        seed=1001,
        spatial=True,
        max_changes=0,
    )
    return generate_dataset(config, graph=desk_graph)


@pytest.fixture(scope="session")
def outbreak_dataset(desk_graph):
    config = ScenarioConfig(
        regime="outbreak",
        horizon=DESK_HORIZON,
        n_samples=200,
        seed=2002,
        spatial=True,
        max_changes=0,
    )
    return generate_dataset(config, graph=desk_graph)


def stack_labels(dataset, indices=None):
    samples = dataset.samples if indices is None else [dataset.samples[i] for i in indices]
    return np.stack([s.labels for s in samples])
