"""Per-agent protocol: round phases, edge-multiplier updates, step sizes.

A round is two synchronous exchanges. Phase 1: gather the neighbors' edge
multipliers pointing at us, solve the local epigraph subproblem, store the
fresh (x, rho, mu). Phase 2: gather the neighbors' fresh mu vectors and move
every outgoing edge multiplier against the disagreement:
lambda_out[j] -= gamma_t * (mu_self - mu_j). Each directed multiplier is
owned and written by exactly one node, so updates across an edge are exactly
antisymmetric and, under zero initialization, the network-wide net offset
stays identically zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph
from .model import AgentSpec
from .subproblem import EpigraphSolver, LambdaExchange, LocalPrimalDual, lambda_delta


# --- step-size schedules -------------------------------------------------

@dataclass(frozen=True)
class PowerLaw:
    """gamma(t) = scale * (t+1)^(-exponent).

    Diminishing with divergent sum and convergent square-sum whenever
    0.5 < exponent <= 1. The +1 shift keeps gamma finite at t=0 without
    changing the asymptotics.
    """

    exponent: float = 0.8
    scale: float = 1.0

    def at(self, t: int) -> float:
        return self.scale * float(t + 1) ** (-self.exponent)

    @property
    def diminishing(self) -> bool:
        return 0.5 < self.exponent <= 1.0 and self.scale > 0


@dataclass(frozen=True)
class Harmonic:
    """gamma(t) = scale / (t+1)."""

    scale: float = 1.0

    def at(self, t: int) -> float:
        return self.scale / float(t + 1)

    @property
    def diminishing(self) -> bool:
        return self.scale > 0


@dataclass(frozen=True)
class Constant:
    """Fixed step size; diagnostics only, does not vanish."""

    value: float = 0.1

    def at(self, t: int) -> float:
        return self.value

    @property
    def diminishing(self) -> bool:
        return False


StepSchedule = PowerLaw | Harmonic | Constant


def gamma(schedule: StepSchedule, t: int) -> float:
    if t < 0:
        raise ValueError("iteration index must be nonnegative")
    value = schedule.at(t)
    if value < 0:
        raise ValueError("step size must be nonnegative")
    return value


def validate_schedule(schedule: StepSchedule) -> bool:
    """True iff the family analytically vanishes, sums to infinity and has
    finite square-sum."""
    return schedule.diminishing


def schedule_to_dict(schedule: StepSchedule) -> dict:
    if isinstance(schedule, PowerLaw):
        return {"kind": "power-law", "exponent": schedule.exponent, "scale": schedule.scale}
    if isinstance(schedule, Harmonic):
        return {"kind": "harmonic", "scale": schedule.scale}
    if isinstance(schedule, Constant):
        return {"kind": "constant", "value": schedule.value}
    raise TypeError(f"unknown schedule {schedule!r}")


def schedule_from_dict(d: dict) -> StepSchedule:
    kind = d.get("kind")
    if kind == "power-law":
        return PowerLaw(exponent=float(d.get("exponent", 0.8)),
                        scale=float(d.get("scale", 1.0)))
    if kind == "harmonic":
        return Harmonic(scale=float(d.get("scale", 1.0)))
    if kind == "constant":
        return Constant(value=float(d["value"]))
    raise ValueError(f"unknown schedule kind {kind!r}")


# --- edge-multiplier initialization --------------------------------------

@dataclass(frozen=True)
class ZeroInit:
    def to_dict(self):
        return {"kind": "zero"}


@dataclass(frozen=True)
class SeededRandomInit:
    seed: int = 0
    scale: float = 1.0

    def to_dict(self):
        return {"kind": "random", "seed": self.seed, "scale": self.scale}


LambdaInit = ZeroInit | SeededRandomInit


def lambda_init_from_dict(d: dict) -> LambdaInit:
    kind = d.get("kind", "zero")
    if kind == "zero":
        return ZeroInit()
    if kind == "random":
        return SeededRandomInit(seed=int(d.get("seed", 0)),
                                scale=float(d.get("scale", 1.0)))
    raise ValueError(f"unknown lambda init kind {kind!r}")


# --- agent state ----------------------------------------------------------

@dataclass
class AgentState:
    agent_id: int
    x: np.ndarray
    rho: float
    mu: np.ndarray
    lambda_out: dict[int, np.ndarray]
    round: int = 0


def init_agent(agent_id: int, g: Graph, spec: AgentSpec,
               policy: LambdaInit = ZeroInit()) -> AgentState:
    """Fresh state with edge multipliers set by the chosen policy; primal
    and dual fields are zero placeholders until the first round."""
    S = spec.horizon
    neighbors = g.neighbors(agent_id)
    if isinstance(policy, SeededRandomInit):
        rng = np.random.default_rng([policy.seed, agent_id])
        lambda_out = {j: policy.scale * rng.standard_normal(S) for j in neighbors}
    else:
        lambda_out = {j: np.zeros(S) for j in neighbors}
    return AgentState(agent_id=agent_id, x=np.zeros(S), rho=0.0,
                      mu=np.zeros(S), lambda_out=lambda_out)


def round_phase1(state: AgentState, solver: EpigraphSolver,
                 incoming: dict[int, np.ndarray]) -> LocalPrimalDual:
    """Local solve against the gathered neighbor multipliers; stores and
    returns the fresh (x, rho, mu)."""
    exchange = LambdaExchange(horizon=solver.spec.horizon,
                              outgoing=dict(state.lambda_out),
                              incoming=dict(incoming))
    result = solver.solve(lambda_delta(exchange))
    state.x = result.x
    state.rho = result.rho
    state.mu = result.mu
    return result


def round_phase2(state: AgentState, incoming_mu: dict[int, np.ndarray],
                 gamma_t: float) -> None:
    """Move every outgoing edge multiplier against the mu disagreement."""
    if gamma_t < 0:
        raise ValueError("step size must be nonnegative")
    if set(incoming_mu) != set(state.lambda_out):
        raise ValueError("phase 2 requires exactly one mu per neighbor")
    for j, mu_j in incoming_mu.items():
        state.lambda_out[j] = state.lambda_out[j] - gamma_t * (state.mu - mu_j)
    state.round += 1
