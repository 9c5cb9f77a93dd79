"""JSON (de)serialization of model parameters and contact policies,
plus CSV/NDJSON export of simulated trajectories.

The JSON document layout::

    {
      "age_groups": [{"label": "0-4", "population_share": 0.046}, ...],
      "durations": {"exposed": [...6], "presymptomatic": [...], "symptomatic": [...],
                    "severe": [...], "critical": [...]},
      "transmission_probability": [...6],
      "symptom_probability": [...6], "severe_probability": [...6],
      "critical_probability": [...6], "death_probability": [...6],
      "nonisolated_presymptomatic": 1.0, "nonisolated_symptomatic": 0.3,
      "baseline_contacts": [[...6]...6],
      "ramp_width": 0.5,
      "change_points": [{"day": 12, "reduction": 0.4, "matrix": optional 6x6}]
    }
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .epicore import (
    AGE_LABELS,
    N_AGE_GROUPS,
    STATE_LABELS,
    AgeGroupSpec,
    ContactChangePoint,
    ContactPolicy,
    DailyTrajectory,
    EpiParameters,
)


class ScenarioFormatError(ValueError):
    """Malformed scenario JSON; the message carries the offending field path."""


_DURATION_KEYS = {
    "exposed": "t_exposed",
    "presymptomatic": "t_presymptomatic",
    "symptomatic": "t_symptomatic",
    "severe": "t_severe",
    "critical": "t_critical",
}
_PROB_KEYS = {
    "transmission_probability": "transmission_prob",
    "symptom_probability": "p_symptoms",
    "severe_probability": "p_severe",
    "critical_probability": "p_critical",
    "death_probability": "p_death",
}


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise ScenarioFormatError(f"missing field {path}.{key}".lstrip("."))
    return doc[key]


def _age_vector(value, path: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != N_AGE_GROUPS:
        raise ScenarioFormatError(f"{path} must be a list of {N_AGE_GROUPS} numbers")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"{path} contains a non-numeric entry") from exc


def _matrix(value, path: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != N_AGE_GROUPS:
        raise ScenarioFormatError(f"{path} must be a {N_AGE_GROUPS}x{N_AGE_GROUPS} matrix")
    return np.array([_age_vector(row, f"{path}[{i}]") for i, row in enumerate(value)])


def params_from_dict(doc: dict) -> EpiParameters:
    durations = _require(doc, "durations", "")
    kwargs = {}
    for key, attr in _DURATION_KEYS.items():
        kwargs[attr] = _age_vector(_require(durations, key, "durations"), f"durations.{key}")
    for key, attr in _PROB_KEYS.items():
        kwargs[attr] = _age_vector(_require(doc, key, ""), key)
    kwargs["nonisolated_presym"] = float(doc.get("nonisolated_presymptomatic", 1.0))
    kwargs["nonisolated_sym"] = float(doc.get("nonisolated_symptomatic", 0.3))
    try:
        return EpiParameters(**kwargs)
    except ValueError as exc:
        raise ScenarioFormatError(str(exc)) from exc


def params_to_dict(params: EpiParameters) -> dict:
    return {
        "age_groups": [
            {"label": AGE_LABELS[i], "population_share": None} for i in range(N_AGE_GROUPS)
        ],
        "durations": {key: getattr(params, attr).tolist() for key, attr in _DURATION_KEYS.items()},
        **{key: getattr(params, attr).tolist() for key, attr in _PROB_KEYS.items()},
        "nonisolated_presymptomatic": params.nonisolated_presym,
        "nonisolated_symptomatic": params.nonisolated_sym,
    }


def age_groups_from_dict(doc: dict) -> tuple[AgeGroupSpec, ...]:
    raw = _require(doc, "age_groups", "")
    if not isinstance(raw, list) or len(raw) != N_AGE_GROUPS:
        raise ScenarioFormatError(f"age_groups must list {N_AGE_GROUPS} groups")
    groups = []
    for i, entry in enumerate(raw):
        share = _require(entry, "population_share", f"age_groups[{i}]")
        groups.append(AgeGroupSpec(i, entry.get("label", AGE_LABELS[i]), float(share)))
    total = sum(g.population_share for g in groups)
    if abs(total - 1.0) > 1e-12:
        raise ScenarioFormatError(f"age_groups population shares sum to {total}, expected 1")
    return tuple(groups)


def policy_from_dict(doc: dict) -> ContactPolicy:
    baseline = _matrix(_require(doc, "baseline_contacts", ""), "baseline_contacts")
    ramp_width = float(doc.get("ramp_width", 0.5))
    changes = []
    for i, entry in enumerate(doc.get("change_points", [])):
        path = f"change_points[{i}]"
        day = float(_require(entry, "day", path))
        reduction = float(_require(entry, "reduction", path))
        matrix = entry.get("matrix")
        if matrix is not None:
            matrix = _matrix(matrix, f"{path}.matrix")
        try:
            changes.append(ContactChangePoint(day=day, reduction=reduction, matrix=matrix))
        except ValueError as exc:
            raise ScenarioFormatError(f"{path}: {exc}") from exc
    try:
        return ContactPolicy(baseline=baseline, change_points=tuple(changes), ramp_width=ramp_width)
    except ValueError as exc:
        raise ScenarioFormatError(str(exc)) from exc


def policy_to_dict(policy: ContactPolicy) -> dict:
    return {
        "baseline_contacts": policy.baseline.tolist(),
        "ramp_width": policy.ramp_width,
        "change_points": [
            {
                "day": cp.day,
                "reduction": cp.reduction,
                **({"matrix": cp.matrix.tolist()} if cp.matrix is not None else {}),
            }
            for cp in policy.change_points
        ],
    }


def load_scenario_json(path) -> tuple[EpiParameters, ContactPolicy]:
    doc = json.loads(Path(path).read_text())
    return params_from_dict(doc), policy_from_dict(doc)


def save_scenario_json(path, params: EpiParameters, policy: ContactPolicy) -> None:
    doc = {**params_to_dict(params), **policy_to_dict(policy)}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def _trajectory_rows(values: np.ndarray, node: int):
    # values: (days, 6, 8) for one node
    for day in range(values.shape[0]):
        for age in range(N_AGE_GROUPS):
            for state in range(len(STATE_LABELS)):
                yield day, node, AGE_LABELS[age], STATE_LABELS[state], values[day, age, state]


def trajectory_to_csv(path, trajectories) -> None:
    """Write one or many per-node trajectories as (day, node, age, state, value) rows.

    `trajectories` is a DailyTrajectory or a sequence of them (node index =
    position in the sequence).
    """
    if isinstance(trajectories, DailyTrajectory):
        trajectories = [trajectories]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "node", "age", "state", "value"])
        for node, traj in enumerate(trajectories):
            for row in _trajectory_rows(traj.values, node):
                writer.writerow([row[0], row[1], row[2], row[3], repr(float(row[4]))])


def trajectory_to_ndjson(path, trajectories) -> None:
    if isinstance(trajectories, DailyTrajectory):
        trajectories = [trajectories]
    with open(path, "w") as fh:
        for node, traj in enumerate(trajectories):
            for day, node_id, age, state, value in _trajectory_rows(traj.values, node):
                fh.write(
                    json.dumps(
                        {"day": day, "node": node_id, "age": age, "state": state, "value": float(value)}
                    )
                )
                fh.write("\n")
