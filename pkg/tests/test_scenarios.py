"""Tests for scenario sampling, feature encodings, and dataset files."""

import numpy as np
import pytest

from graphepi.epicore import (
    EXPOSED,
    PRESYMPT,
    RECOVERED,
    SUSCEPTIBLE,
    SYMPT,
    ContactChangePoint,
    default_policy,
)
from graphepi.metapop import synth_graph
from graphepi.scenarios import (
    DESCRIPTOR_WIDTH,
    NONSPATIAL_WIDTH,
    SPATIAL_WIDTH,
    DatasetFormatError,
    ScenarioConfig,
    decode_nonspatial_counts,
    encode_nonspatial,
    encode_spatial,
    export_ndjson,
    generate_dataset,
    inverse_log1p,
    read_dataset,
    sample_change_points,
    sample_outbreak_init,
    sample_persistent_init,
    transform_log1p,
    write_dataset,
)


class StubRng:
    """Deterministic stand-in for a Generator: returns chosen uniform draws."""

    def __init__(self, uniforms):
        self.uniforms = list(uniforms)

    def uniform(self, low, high=None, size=None):
        value = self.uniforms.pop(0)
        return value

    def integers(self, low, high=None):
        raise NotImplementedError


class TestOutbreakInit:
    def test_band_minima(self):
        rng = StubRng([7.0, 25.0, 7.0])  # symptomatic, exposed, presymptomatic
        state = sample_outbreak_init(rng, 100_000.0)
        assert state[:, SYMPT].sum() == pytest.approx(7.0)
        assert state[:, EXPOSED].sum() == pytest.approx(25.0)
        assert state[:, PRESYMPT].sum() == pytest.approx(7.0)
        assert state[:, RECOVERED].sum() == 0.0
        assert state.sum() == pytest.approx(100_000.0)

    def test_counts_scale_with_population(self):
        draws = [50.0, 100.0, 20.0]
        small = sample_outbreak_init(StubRng(list(draws)), 100_000.0)
        large = sample_outbreak_init(StubRng(list(draws)), 200_000.0)
        np.testing.assert_allclose(large, small * 2.0)

    def test_symptomatic_mean_matches_uniform(self):
        rng = np.random.default_rng(99)
        totals = [
            sample_outbreak_init(rng, 100_000.0)[:, SYMPT].sum() for _ in range(10_000)
        ]
        assert np.mean(totals) == pytest.approx(53.5, abs=2.0)

    def test_nonuniform_age_shares(self):
        shares = np.array([0.5, 0.1, 0.1, 0.1, 0.1, 0.1])
        state = sample_outbreak_init(np.random.default_rng(0), 100_000.0, shares)
        assert state[0].sum() == pytest.approx(50_000.0)

    def test_rejects_nonpositive_population(self):
        with pytest.raises(ValueError):
            sample_outbreak_init(np.random.default_rng(0), 0.0)


class TestPersistentInit:
    def test_cap_boundary(self):
        rng = StubRng([0.05, 0.225, 0.225, 0.0])  # sy, e, ns sum to exactly 0.5
        state = sample_persistent_init(rng, 10_000.0)
        infected = state[:, [SYMPT, EXPOSED, PRESYMPT]].sum()
        assert infected == pytest.approx(5_000.0)
        assert state[:, SUSCEPTIBLE].sum() + state[:, RECOVERED].sum() == pytest.approx(5_000.0)

    def test_oversized_draw_rescaled_to_cap(self):
        rng = StubRng([0.05, 0.4, 0.4, 0.0])
        state = sample_persistent_init(rng, 10_000.0)
        infected = state[:, [SYMPT, EXPOSED, PRESYMPT]].sum()
        assert infected == pytest.approx(5_000.0)

    def test_recovered_at_feasibility_boundary_leaves_no_susceptibles(self):
        rng = StubRng([0.05, 0.2, 0.15, 0.6])  # infected 0.4, recovered 0.6
        state = sample_persistent_init(rng, 10_000.0)
        assert state[:, SUSCEPTIBLE].sum() == pytest.approx(0.0, abs=1e-9)

    def test_many_draws_nonnegative_and_conserving(self):
        rng = np.random.default_rng(12)
        for _ in range(10_000):
            state = sample_persistent_init(rng, 1.0)
            assert np.all(state >= 0)
            assert state.sum() == pytest.approx(1.0, abs=1e-12)


class TestChangePoints:
    def test_sorted_distinct_in_window(self):
        rng = np.random.default_rng(5)
        for _ in range(2000):
            changes = sample_change_points(rng)
            days = [cp.day for cp in changes]
            assert len(changes) <= 3
            assert days == sorted(days)
            assert len(set(days)) == len(days)
            for cp in changes:
                assert 1 <= cp.day <= 30
                assert 0 <= cp.reduction < 1

    def test_count_mean_is_midpoint(self):
        rng = np.random.default_rng(17)
        counts = [len(sample_change_points(rng)) for _ in range(100_000)]
        assert np.mean(counts) == pytest.approx(1.5, abs=0.02)

    def test_zero_changes_possible(self):
        rng = np.random.default_rng(2)
        assert any(len(sample_change_points(rng)) == 0 for _ in range(100))


class TestLogTransform:
    def test_fixed_points(self):
        assert transform_log1p(0.0) == 0.0
        assert transform_log1p(np.e - 1) == pytest.approx(1.0)

    def test_round_trip_large_vector(self):
        rng = np.random.default_rng(31)
        x = rng.random(1_000_000) * 1e6
        back = inverse_log1p(transform_log1p(x))
        rel = np.abs(back - x) / np.maximum(x, 1e-300)
        assert rel.max() < 1e-12

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            transform_log1p(np.array([-0.5]))


def make_day_states(n_days=5, value=100.0):
    states = np.zeros((n_days, 6, 8))
    states[:, :, SUSCEPTIBLE] = value
    return states


class TestEncodings:
    def test_nonspatial_width_and_masking(self):
        policy = default_policy()
        features = encode_nonspatial(make_day_states(), policy)
        assert features.shape == (5, NONSPATIAL_WIDTH)
        assert NONSPATIAL_WIDTH == 162
        np.testing.assert_array_equal(features[:, 48:], 0.0)

    def test_masking_per_change_count(self):
        for m in range(4):
            changes = tuple(
                ContactChangePoint(day=float(5 * (i + 1)), reduction=0.3) for i in range(m)
            )
            policy = default_policy(changes)
            features = encode_nonspatial(make_day_states(), policy)
            block = features[0, 48:]
            mats, days, reds = block[:108], block[108:111], block[111:114]
            for slot in range(3):
                mat = mats[slot * 36 : (slot + 1) * 36]
                if slot < m:
                    np.testing.assert_allclose(
                        mat.reshape(6, 6), 0.7 * policy.baseline, rtol=1e-6
                    )
                    assert days[slot] == 5 * (slot + 1)
                    assert reds[slot] == pytest.approx(0.3)
                else:
                    np.testing.assert_array_equal(mat, 0.0)
                    assert days[slot] == 0.0
                    assert reds[slot] == 0.0

    def test_zero_state_encodes_to_zero_counts(self):
        features = encode_nonspatial(np.zeros((5, 6, 8)), default_policy())
        np.testing.assert_array_equal(features[:, :48], 0.0)

    def test_count_round_trip(self):
        rng = np.random.default_rng(8)
        states = rng.random((5, 6, 8)) * 5e4
        features = encode_nonspatial(states, default_policy())
        decoded = decode_nonspatial_counts(features)
        np.testing.assert_allclose(decoded, states, rtol=1e-5)

    def test_spatial_width_and_broadcast(self):
        states = np.zeros((5, 7, 6, 8))
        states[:, :, :, SUSCEPTIBLE] = np.arange(7)[None, :, None] * 100.0 + 50.0
        policy = default_policy((ContactChangePoint(10.0, 0.5),))
        features = encode_spatial(states, policy)
        assert features.shape == (7, SPATIAL_WIDTH)
        assert SPATIAL_WIDTH == 354
        descriptor = features[:, 240:]
        for row in descriptor:
            np.testing.assert_array_equal(row, descriptor[0])

    def test_identical_nodes_get_identical_rows(self):
        states = np.zeros((5, 3, 6, 8))
        states[:, :, :, SUSCEPTIBLE] = 123.0
        features = encode_spatial(states, default_policy())
        np.testing.assert_array_equal(features[0], features[1])

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            encode_nonspatial(np.zeros((4, 6, 8)), default_policy())
        with pytest.raises(ValueError):
            encode_spatial(np.zeros((5, 6, 8)), default_policy())


class TestDatasetFiles:
    def test_empty_dataset_round_trip(self, tmp_path):
        config = ScenarioConfig(regime="outbreak", horizon=30, n_samples=0, seed=1)
        data = generate_dataset(config)
        path = tmp_path / "empty.egs"
        write_dataset(path, data)
        loaded = read_dataset(path)
        assert len(loaded) == 0
        assert loaded.config == config

    def test_nonspatial_generation_round_trip(self, tmp_path):
        config = ScenarioConfig(regime="outbreak", horizon=30, n_samples=3, seed=42)
        data = generate_dataset(config)
        assert len(data) == 3
        assert data.feature_shape == (5, 162)
        assert data.label_shape == (30, 48)
        path = tmp_path / "d.egs"
        write_dataset(path, data)
        loaded = read_dataset(path)
        for orig, back in zip(data.samples, loaded.samples):
            np.testing.assert_array_equal(orig.features, back.features)
            np.testing.assert_array_equal(orig.labels, back.labels)
            assert orig.meta == back.meta

    def test_same_seed_gives_identical_bytes(self, tmp_path):
        config = ScenarioConfig(regime="persistent_threat", horizon=30, n_samples=4, seed=7)
        a, b = tmp_path / "a.egs", tmp_path / "b.egs"
        write_dataset(a, generate_dataset(config))
        write_dataset(b, generate_dataset(config))
        assert a.read_bytes() == b.read_bytes()

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        config = ScenarioConfig(regime="outbreak", horizon=30, n_samples=4, seed=3)
        a, b = tmp_path / "a.egs", tmp_path / "b.egs"
        write_dataset(a, generate_dataset(config, workers=1))
        write_dataset(b, generate_dataset(config, workers=3))
        assert a.read_bytes() == b.read_bytes()

    def test_spatial_generation(self, tmp_path):
        graph = synth_graph(4, 0.5, seed=9)
        config = ScenarioConfig(
            regime="persistent_threat", horizon=30, n_samples=2, seed=11, spatial=True
        )
        data = generate_dataset(config, graph=graph)
        assert data.feature_shape == (4, 354)
        assert data.label_shape == (30, 4, 48)
        # Labels stay on the original scale: susceptible counts are large.
        assert data.samples[0].labels.max() > 1e3

    def test_label_conservation_per_day(self):
        graph = synth_graph(3, 0.6, seed=21)
        config = ScenarioConfig(
            regime="outbreak", horizon=30, n_samples=1, seed=5, spatial=True
        )
        data = generate_dataset(config, graph=graph)
        labels = data.samples[0].labels.reshape(30, 3, 6, 8)
        totals = labels.sum(axis=(1, 3))  # per-day per-age global totals
        expected = np.tile(graph.node_age_populations().sum(axis=0), (30, 1))
        # Labels are stored as f32, so conservation holds to f32 precision.
        np.testing.assert_allclose(totals, expected, rtol=1e-5)

    def test_truncated_file_rejected(self, tmp_path):
        config = ScenarioConfig(regime="outbreak", horizon=30, n_samples=2, seed=1)
        path = tmp_path / "d.egs"
        write_dataset(path, generate_dataset(config))
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 10])
        with pytest.raises(DatasetFormatError):
            read_dataset(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "d.egs"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(DatasetFormatError, match="magic"):
            read_dataset(path)

    def test_ndjson_export(self, tmp_path):
        import json

        config = ScenarioConfig(regime="outbreak", horizon=30, n_samples=2, seed=13)
        data = generate_dataset(config)
        path = tmp_path / "d.ndjson"
        export_ndjson(data, path)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 2
        first = json.loads(lines[0])
        assert first["meta"]["index"] == 0
        assert len(first["features"]) == 5
        assert len(first["features"][0]) == 162

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ScenarioConfig(regime="weird", horizon=30, n_samples=1, seed=0)
        with pytest.raises(ValueError):
            ScenarioConfig(regime="outbreak", horizon=45, n_samples=1, seed=0)
        with pytest.raises(ValueError):
            ScenarioConfig(regime="outbreak", horizon=30, n_samples=1, seed=0, input_days=4)

    def test_descriptor_width_constant(self):
        assert DESCRIPTOR_WIDTH == 114
