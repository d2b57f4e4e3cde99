"""Thermostatically controlled loads: first-order thermal model, its exact
discretization, and the peak-demand scheduling scenario built from it.

Each device's temperature drifts toward the outdoor value at rate alpha,
is pushed by a known forcing profile, and is heated by a bounded control
input. Temperature must stay inside a comfort band over the horizon, which
translates (through the closed-form step response of the sampled dynamics)
into linear inequalities on the control vector. Power consumption is
proportional to the control, so the fleet's scheduling problem is exactly
the distributed min-max model with affine costs.

Default numbers describe a heating scenario: cold outdoors below the
comfort band, so devices must run part of the time, and a mid-horizon
heat-loss pulse (a 5-slot forcing dip) concentrates demand that peak-aware
scheduling can flatten by preheating inside the band.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import AffineCost, AgentSpec, MinMaxProblem, validate


class ScenarioInfeasible(RuntimeError):
    """A generated device has an empty feasible set; aborts instead of
    silently resampling so seeds stay meaningful."""


@dataclass
class TclParams:
    """Physical and economic parameters of one device.

    temp_out and forcing are per-slot profiles of equal length (the
    horizon); all other fields are scalars. Units: hours, kelvin, kelvin
    per hour.
    """

    temp_out: np.ndarray
    forcing: np.ndarray
    alpha: float = 0.5
    gain: float = 10.0
    dt: float = 0.25
    temp_init: float = 22.0
    temp_min: float = 20.0
    temp_max: float = 24.0
    power_rate: float = 1.0

    def __post_init__(self):
        self.temp_out = np.asarray(self.temp_out, dtype=float).ravel()
        self.forcing = np.asarray(self.forcing, dtype=float).ravel()
        if self.temp_out.size != self.forcing.size:
            raise ValueError("temp_out and forcing must have the same length")
        if self.alpha <= 0 or self.gain <= 0 or self.dt <= 0:
            raise ValueError("alpha, gain and dt must be positive")
        if not self.temp_min < self.temp_max:
            raise ValueError("temp_min must be below temp_max")

    @property
    def horizon(self) -> int:
        return self.temp_out.size

    @property
    def decay(self) -> float:
        """Per-slot survival factor of the sampled dynamics."""
        return float(np.exp(-self.alpha * self.dt))


def default_params(horizon: int, temp_out_value: float = 10.0,
                   **overrides) -> TclParams:
    """Heating-scenario defaults with constant outdoor temperature."""
    return TclParams(temp_out=np.full(horizon, temp_out_value),
                     forcing=np.zeros(horizon), **overrides)


def discrete_step(params: TclParams, temp: float, control: float, s: int) -> float:
    """Exact one-slot update of the sampled temperature under constant
    input over the slot."""
    if not (0 <= s < params.horizon):
        raise IndexError(f"slot {s} out of range for horizon {params.horizon}")
    a = params.decay
    drive = (params.gain / params.alpha) * control \
        + params.forcing[s] / params.alpha + params.temp_out[s]
    return temp * a + (1.0 - a) * drive


def simulate(params: TclParams, controls: np.ndarray) -> np.ndarray:
    """Temperature after each slot, by iterating the exact recursion."""
    controls = np.asarray(controls, dtype=float).ravel()
    if controls.size != params.horizon:
        raise ValueError("control vector length must equal the horizon")
    temps = np.empty(params.horizon)
    temp = params.temp_init
    for s in range(params.horizon):
        temp = discrete_step(params, temp, controls[s], s)
        temps[s] = temp
    return temps


@dataclass
class TclAgentMatrices:
    """Closed-form response of the sampled dynamics and the band constraints.

    step_response is lower triangular with the per-slot injection factor on
    the diagonal; row s of the temperature trajectory is
    step_response @ (temp_out + forcing/alpha + (gain/alpha) * controls)
    + free_response * temp_init. The band temp_min <= T <= temp_max then
    reads A @ controls <= b.
    """

    step_response: np.ndarray
    free_response: np.ndarray
    A: np.ndarray
    b: np.ndarray


def build_matrices(params: TclParams) -> TclAgentMatrices:
    S = params.horizon
    a = params.decay
    inject = 1.0 - a
    powers = a ** np.arange(S)
    F = np.zeros((S, S))
    for r in range(S):
        F[r, :r + 1] = powers[r::-1] * inject
    free = a ** np.arange(1, S + 1)

    ratio = params.gain / params.alpha
    base_drive = F @ (params.temp_out + params.forcing / params.alpha) \
        + free * params.temp_init
    A = np.vstack([ratio * F, -ratio * F])
    b = np.concatenate([params.temp_max - base_drive, base_drive - params.temp_min])
    return TclAgentMatrices(step_response=F, free_response=free, A=A, b=b)


def trajectory_from_matrices(params: TclParams, mats: TclAgentMatrices,
                             controls: np.ndarray) -> np.ndarray:
    """Matrix-form trajectory; agrees with `simulate` to roundoff."""
    drive = params.temp_out + params.forcing / params.alpha \
        + (params.gain / params.alpha) * np.asarray(controls, dtype=float)
    return mats.step_response @ drive + mats.free_response * params.temp_init


def to_agent_spec(params: TclParams) -> AgentSpec:
    """Band constraints plus the unit control box, affine consumption cost."""
    mats = build_matrices(params)
    S = params.horizon
    return AgentSpec(A=mats.A, b=mats.b, lower=np.zeros(S), upper=np.ones(S),
                     costs=[AffineCost(params.power_rate)] * S)


def build_scenario(n_agents: int, horizon: int, seed: int = 0,
                   template: TclParams | None = None) -> MinMaxProblem:
    """Random fleet: per-device forcing pulse and consumption rate.

    Each device gets a 5-slot heat-loss pulse whose center is uniform in
    the middle quarter of the horizon and whose magnitude (in temperature
    rate) is uniform in [1, 2] * alpha; consumption rates are drawn from a
    pool of five values sampled uniformly from [1, 3]. Deterministic per
    seed. Raises ScenarioInfeasible if any device's feasible set is empty.
    """
    if horizon < 5:
        raise ValueError("horizon must be at least the pulse width (5 slots)")
    if n_agents < 1:
        raise ValueError("need at least one agent")
    if template is None:
        template = default_params(horizon)
    if template.horizon != horizon:
        raise ValueError("template profiles must match the requested horizon")

    rng = np.random.default_rng(seed)
    rate_pool = rng.uniform(1.0, 3.0, size=5)
    agents = []
    for _ in range(n_agents):
        lo = horizon // 2 - horizon // 8
        hi = horizon // 2 + horizon // 8
        center = int(rng.integers(lo, hi + 1))
        magnitude = rng.uniform(1.0, 2.0) * template.alpha
        forcing = np.array(template.forcing)
        start = max(center - 2, 0)
        stop = min(center + 3, horizon)
        forcing[start:stop] -= magnitude
        rate = float(rng.choice(rate_pool))
        params = replace(template, forcing=forcing, power_rate=rate)
        agents.append(to_agent_spec(params))

    problem = MinMaxProblem(agents=agents)
    report = validate(problem)
    if not report.ok:
        raise ScenarioInfeasible(f"generated scenario invalid: {report.summary()}")
    return problem
