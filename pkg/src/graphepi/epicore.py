"""Age-resolved SECIR-type compartment model for a single region.

Eight infection states (susceptible, exposed, a-/presymptomatic, symptomatic,
severe, critical, recovered, dead) across six age groups, with a time-varying
contact matrix whose reductions ramp in smoothly through cosine transitions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

N_AGE_GROUPS = 6
N_STATES = 8

AGE_LABELS = ("0-4", "5-14", "15-34", "35-59", "60-79", "80+")
STATE_LABELS = ("S", "E", "I_NS", "I_Sy", "I_Sev", "I_Cr", "R", "D")

# Column indices into a (6, 8) compartment array.
SUSCEPTIBLE, EXPOSED, PRESYMPT, SYMPT, SEVERE, CRITICAL, RECOVERED, DEAD = range(8)

# Compartments that never leave their home region in metapopulation runs.
IMMOBILE_STATES = (SEVERE, CRITICAL, DEAD)

# Synthetic age distribution with plausible shares for a western-European
# population; not calibrated to any census.
DEFAULT_AGE_SHARES = (0.046, 0.092, 0.227, 0.332, 0.216, 0.087)

# Synthetic baseline daily contact matrix (rows: contacting age group).
# Row sums of 3-10 contacts/day are in the plausible range for survey data;
# the specific entries are made up and meant to be overridden from a file.
DEFAULT_BASELINE_CONTACTS = (
    (2.3, 1.0, 1.4, 1.2, 0.3, 0.1),
    (1.0, 4.8, 1.8, 1.5, 0.4, 0.1),
    (0.5, 0.9, 4.6, 2.4, 0.5, 0.1),
    (0.4, 0.8, 2.1, 3.9, 0.8, 0.2),
    (0.2, 0.3, 1.0, 1.6, 1.8, 0.4),
    (0.1, 0.2, 0.5, 0.9, 0.7, 1.0),
)


class EpiModelError(Exception):
    """Base class for model errors."""


class DegeneratePopulationError(EpiModelError):
    """Raised when a living population (N_j - D_j) is not strictly positive."""


class StepSizeUnderflowError(EpiModelError):
    """Raised when the adaptive integrator cannot make progress."""


@dataclass(frozen=True)
class AgeGroupSpec:
    """One of the six age brackets and its share of the total population."""

    index: int
    label: str
    population_share: float

    def __post_init__(self):
        if not 0 <= self.index < N_AGE_GROUPS:
            raise ValueError(f"age group index {self.index} out of range")
        if not 0.0 <= self.population_share <= 1.0:
            raise ValueError("population_share must lie in [0, 1]")


def default_age_groups() -> tuple[AgeGroupSpec, ...]:
    return tuple(
        AgeGroupSpec(i, AGE_LABELS[i], DEFAULT_AGE_SHARES[i]) for i in range(N_AGE_GROUPS)
    )


def _as_age_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape == ():
        arr = np.full(N_AGE_GROUPS, float(arr))
    if arr.shape != (N_AGE_GROUPS,):
        raise ValueError(f"{name} must have {N_AGE_GROUPS} entries, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class EpiParameters:
    """Age-resolved stage durations and transition probabilities.

    Durations are mean days spent in a state; probabilities are the chance of
    aggravation to the next state (the complement recovers). The two
    non-isolation proportions scale how much the infectious compartments
    contribute to transmission.
    """

    t_exposed: np.ndarray
    t_presymptomatic: np.ndarray
    t_symptomatic: np.ndarray
    t_severe: np.ndarray
    t_critical: np.ndarray
    transmission_prob: np.ndarray
    p_symptoms: np.ndarray
    p_severe: np.ndarray
    p_critical: np.ndarray
    p_death: np.ndarray
    nonisolated_presym: float = 1.0
    nonisolated_sym: float = 0.3

    def __post_init__(self):
        for name in (
            "t_exposed",
            "t_presymptomatic",
            "t_symptomatic",
            "t_severe",
            "t_critical",
            "transmission_prob",
            "p_symptoms",
            "p_severe",
            "p_critical",
            "p_death",
        ):
            object.__setattr__(self, name, _as_age_vector(getattr(self, name), name))
        for name in ("t_exposed", "t_presymptomatic", "t_symptomatic", "t_severe", "t_critical"):
            if not np.all(getattr(self, name) > 0):
                raise ValueError(f"{name} must be strictly positive")
        for name in ("transmission_prob", "p_symptoms", "p_severe", "p_critical", "p_death"):
            vals = getattr(self, name)
            if np.any(vals < 0) or np.any(vals > 1):
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("nonisolated_presym", "nonisolated_sym"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @classmethod
    def covid_wild_type(cls) -> "EpiParameters":
        """Published wild-type SARS-CoV-2 parameter set (first 2020 waves).

        The non-isolation proportions are synthetic defaults (all
        a-/presymptomatic cases circulate, 30% of symptomatic ones do);
        they are configuration, not part of the published set.
        """
        return cls(
            t_exposed=[3.335, 3.335, 3.335, 3.335, 3.335, 3.335],
            t_presymptomatic=[2.74, 2.74, 2.565, 2.565, 2.565, 2.565],
            t_symptomatic=[7.02625, 7.02625, 7.0665, 6.9385, 6.835, 6.775],
            t_severe=[5.0, 5.0, 5.925, 7.55, 8.5, 11.0],
            t_critical=[6.95, 6.95, 6.86, 17.36, 17.1, 11.6],
            transmission_prob=[0.03, 0.06, 0.06, 0.06, 0.09, 0.175],
            p_symptoms=[0.75, 0.75, 0.8, 0.8, 0.8, 0.8],
            p_severe=[0.0075, 0.0075, 0.019, 0.0615, 0.165, 0.225],
            p_critical=[0.075, 0.075, 0.075, 0.15, 0.3, 0.4],
            p_death=[0.05, 0.05, 0.14, 0.14, 0.4, 0.6],
            nonisolated_presym=1.0,
            nonisolated_sym=0.3,
        )


@dataclass(frozen=True)
class ContactChangePoint:
    """A contact reduction taking effect at `day` via a smooth ramp.

    The post-change matrix defaults to (1 - reduction) times the policy
    baseline; an explicit 6x6 override may be supplied instead.
    """

    day: float
    reduction: float
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.reduction < 1.0:
            raise ValueError("reduction must lie in [0, 1)")
        if self.day <= 0:
            raise ValueError("change day must be positive")
        if self.matrix is not None:
            m = np.asarray(self.matrix, dtype=float)
            if m.shape != (N_AGE_GROUPS, N_AGE_GROUPS) or np.any(m < 0):
                raise ValueError("override matrix must be nonnegative 6x6")
            object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class ContactPolicy:
    """Baseline contact matrix plus up to three smooth change points."""

    baseline: np.ndarray
    change_points: tuple[ContactChangePoint, ...] = ()
    ramp_width: float = 0.5

    def __post_init__(self):
        base = np.asarray(self.baseline, dtype=float)
        if base.shape != (N_AGE_GROUPS, N_AGE_GROUPS) or np.any(base < 0):
            raise ValueError("baseline must be a nonnegative 6x6 matrix")
        object.__setattr__(self, "baseline", base)
        object.__setattr__(self, "change_points", tuple(self.change_points))
        if not 0.0 < self.ramp_width < 1.0:
            raise ValueError("ramp_width must lie in (0, 1)")
        days = [cp.day for cp in self.change_points]
        if any(b - a < 1.0 for a, b in zip(days, days[1:])):
            raise ValueError("change days must increase by at least one day")
        # Days >= 1 apart with ramp_width < 1 means ramps can never overlap.
        assert all(b - a > self.ramp_width for a, b in zip(days, days[1:]))

    def plateau(self, m: int) -> np.ndarray:
        """Contact matrix in force after change point m has fully ramped in."""
        if m < 0:
            return self.baseline
        cp = self.change_points[m]
        if cp.matrix is not None:
            return cp.matrix
        return (1.0 - cp.reduction) * self.baseline


def default_policy(change_points=(), ramp_width: float = 0.5) -> ContactPolicy:
    return ContactPolicy(
        baseline=np.asarray(DEFAULT_BASELINE_CONTACTS, dtype=float),
        change_points=tuple(change_points),
        ramp_width=ramp_width,
    )


def contact_rate(policy: ContactPolicy, t: float) -> np.ndarray:
    """Contact matrix at time t, cosine-interpolated inside ramp intervals.

    Each ramp starts from the previous plateau and ends at the change
    point's own post-change matrix, so successive reductions compose.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    delta = policy.ramp_width
    current = policy.baseline
    for m, cp in enumerate(policy.change_points):
        if t <= cp.day:
            break
        target = policy.plateau(m)
        if t >= cp.day + delta:
            current = target
            continue
        w = 0.5 * (1.0 + np.cos(np.pi * (t - cp.day) / delta))
        return target + (current - target) * w
    return current


def force_of_infection(state: np.ndarray, params: EpiParameters, contact: np.ndarray) -> np.ndarray:
    """Per-age rate at which susceptibles become exposed.

    `state` is a (6, 8) compartment array; dS_i/dt = -S_i * lambda_i.
    """
    state = np.asarray(state, dtype=float)
    lam = _force_of_infection_multi(state[np.newaxis], params, contact)
    return lam[0]


def _force_of_infection_multi(states: np.ndarray, params: EpiParameters, contact: np.ndarray) -> np.ndarray:
    """Vectorized force of infection for an (n, 6, 8) stack of regions."""
    totals = states.sum(axis=2)
    living = totals - states[:, :, DEAD]
    if np.any(living <= 0):
        raise DegeneratePopulationError("living population must be positive in every age group")
    infectious = (
        params.nonisolated_presym * states[:, :, PRESYMPT]
        + params.nonisolated_sym * states[:, :, SYMPT]
    )
    return params.transmission_prob * ((infectious / living) @ contact.T)


def _derivatives(states: np.ndarray, params: EpiParameters, contact: np.ndarray) -> np.ndarray:
    """Compartment derivatives for an (n, 6, 8) stack sharing one contact matrix."""
    lam = _force_of_infection_multi(states, params, contact)
    out_e = states[:, :, EXPOSED] / params.t_exposed
    out_ns = states[:, :, PRESYMPT] / params.t_presymptomatic
    out_sy = states[:, :, SYMPT] / params.t_symptomatic
    out_sev = states[:, :, SEVERE] / params.t_severe
    out_cr = states[:, :, CRITICAL] / params.t_critical

    d = np.empty_like(states)
    new_exposed = states[:, :, SUSCEPTIBLE] * lam
    d[:, :, SUSCEPTIBLE] = -new_exposed
    d[:, :, EXPOSED] = new_exposed - out_e
    d[:, :, PRESYMPT] = out_e - out_ns
    d[:, :, SYMPT] = params.p_symptoms * out_ns - out_sy
    d[:, :, SEVERE] = params.p_severe * out_sy - out_sev
    d[:, :, CRITICAL] = params.p_critical * out_sev - out_cr
    d[:, :, RECOVERED] = (
        (1.0 - params.p_symptoms) * out_ns
        + (1.0 - params.p_severe) * out_sy
        + (1.0 - params.p_critical) * out_sev
        + (1.0 - params.p_death) * out_cr
    )
    d[:, :, DEAD] = params.p_death * out_cr
    return d


def rhs(state: np.ndarray, t: float, params: EpiParameters, policy: ContactPolicy) -> np.ndarray:
    """Time derivative of a single region's (6, 8) compartment array."""
    state = np.asarray(state, dtype=float)
    contact = contact_rate(policy, t)
    return _derivatives(state[np.newaxis], params, contact)[0]


@dataclass
class DailyTrajectory:
    """Day-indexed compartment values for one region.

    `values` has shape (horizon + 1, 6, 8), row d being day d. `clamped`
    counts entries that undershot below -1e-9 before being clamped to zero.
    """

    days: np.ndarray
    values: np.ndarray
    clamped: int = 0
    min_before_clamp: float = 0.0

    def state_at(self, day: int) -> np.ndarray:
        return self.values[day]


NEGATIVITY_TOLERANCE = -1e-9


def _clamp_negatives(values: np.ndarray) -> tuple[np.ndarray, int, float]:
    min_val = float(values.min()) if values.size else 0.0
    beyond = int(np.count_nonzero(values < NEGATIVITY_TOLERANCE))
    return np.maximum(values, 0.0), beyond, min(min_val, 0.0)


def validate_state(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.shape != (N_AGE_GROUPS, N_STATES):
        raise ValueError(f"state must have shape (6, 8), got {state.shape}")
    if np.any(state < NEGATIVITY_TOLERANCE):
        raise ValueError("state has entries below the negativity tolerance")
    return state


def integrate(
    initial: np.ndarray,
    params: EpiParameters,
    policy: ContactPolicy,
    horizon: int,
    rtol: float = 1e-6,
    atol: float = 1e-8,
) -> DailyTrajectory:
    """Integrate the model over [0, horizon] days and report integer-day values.

    Uses adaptive Dormand-Prince RK45 with dense output evaluated at whole
    days. Small negative undershoots are clamped to zero and counted.
    """
    initial = validate_state(initial)
    if horizon < 1:
        raise ValueError("horizon must be at least one day")

    def f(t, y):
        return _derivatives(y.reshape(1, N_AGE_GROUPS, N_STATES), params, contact_rate(policy, t)).ravel()

    sol = solve_ivp(
        f,
        (0.0, float(horizon)),
        initial.ravel(),
        method="RK45",
        rtol=rtol,
        atol=atol,
        t_eval=np.arange(horizon + 1, dtype=float),
    )
    if not sol.success:
        raise StepSizeUnderflowError(sol.message)
    values = sol.y.T.reshape(horizon + 1, N_AGE_GROUPS, N_STATES)
    values, clamped, min_val = _clamp_negatives(values)
    return DailyTrajectory(
        days=np.arange(horizon + 1),
        values=values,
        clamped=clamped,
        min_before_clamp=min_val,
    )
