"""Tests for scenario JSON round-trips and trajectory exports."""

import json

import numpy as np
import pytest

from graphepi.epicore import (
    ContactChangePoint,
    EpiParameters,
    default_policy,
    integrate,
)
from graphepi.params_io import (
    ScenarioFormatError,
    load_scenario_json,
    params_from_dict,
    policy_from_dict,
    save_scenario_json,
    trajectory_to_csv,
    trajectory_to_ndjson,
)


def make_traj():
    state = np.zeros((6, 8))
    state[:, 0] = 10_000.0
    state[2, 1] = 50.0
    state[2, 0] -= 50.0
    return integrate(state, EpiParameters.covid_wild_type(), default_policy(), horizon=3)


class TestScenarioJson:
    def test_round_trip(self, tmp_path):
        params = EpiParameters.covid_wild_type()
        policy = default_policy((ContactChangePoint(day=9, reduction=0.35),))
        path = tmp_path / "scenario.json"
        save_scenario_json(path, params, policy)
        loaded_params, loaded_policy = load_scenario_json(path)
        np.testing.assert_array_equal(loaded_params.t_critical, params.t_critical)
        np.testing.assert_array_equal(loaded_params.p_death, params.p_death)
        assert loaded_params.nonisolated_sym == params.nonisolated_sym
        np.testing.assert_array_equal(loaded_policy.baseline, policy.baseline)
        assert loaded_policy.change_points[0].day == 9
        assert loaded_policy.change_points[0].reduction == 0.35

    def test_missing_field_names_path(self):
        with pytest.raises(ScenarioFormatError, match="durations"):
            params_from_dict({})

    def test_bad_change_point_names_index(self):
        doc = {
            "baseline_contacts": [[1.0] * 6] * 6,
            "change_points": [{"day": 5, "reduction": 2.0}],
        }
        with pytest.raises(ScenarioFormatError, match=r"change_points\[0\]"):
            policy_from_dict(doc)

    def test_wrong_vector_length_rejected(self):
        doc = {
            "durations": {
                "exposed": [1.0, 2.0],
                "presymptomatic": [1.0] * 6,
                "symptomatic": [1.0] * 6,
                "severe": [1.0] * 6,
                "critical": [1.0] * 6,
            },
            "transmission_probability": [0.1] * 6,
            "symptom_probability": [0.5] * 6,
            "severe_probability": [0.5] * 6,
            "critical_probability": [0.5] * 6,
            "death_probability": [0.5] * 6,
        }
        with pytest.raises(ScenarioFormatError, match="durations.exposed"):
            params_from_dict(doc)


class TestTrajectoryExport:
    def test_csv_layout(self, tmp_path):
        traj = make_traj()
        path = tmp_path / "traj.csv"
        trajectory_to_csv(path, traj)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "day,node,age,state,value"
        assert len(lines) == 1 + 4 * 6 * 8  # 4 days x 6 ages x 8 states
        day, node, age, state, value = lines[1].split(",")
        assert (day, node, age, state) == ("0", "0", "0-4", "S")
        assert float(value) > 0

    def test_ndjson_values_match(self, tmp_path):
        traj = make_traj()
        path = tmp_path / "traj.ndjson"
        trajectory_to_ndjson(path, traj)
        rows = [json.loads(line) for line in path.read_text().strip().split("\n")]
        assert len(rows) == 4 * 6 * 8
        exposed_rows = [r for r in rows if r["state"] == "E" and r["age"] == "15-34"]
        assert exposed_rows[0]["value"] == pytest.approx(50.0)
