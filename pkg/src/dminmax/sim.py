"""Synchronous network simulator: rounds, metrics, traces and reports.

Drives all agents through barrier-synchronized rounds of the two protocol
phases, recording per-iteration certificates:

* sum_rho, the running upper bound on the optimal peak;
* P_t, the peak of the aggregate load at the current primal iterates, which
  is sandwiched between the optimal value and sum_rho under zero
  initialization of the edge multipliers;
* per-slot coupling violations (aggregate load minus sum_rho), nonpositive
  by construction up to solver precision;
* an audit of the multiplier invariants (mu on the probability simplex,
  network-wide conservation of the edge multipliers).

Metrics are computed every iteration; rows land in the trace at the
configured stride (the final iteration is always recorded).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .graph import Graph
from .model import MinMaxProblem
from .protocol import (AgentState, LambdaInit, PowerLaw, StepSchedule, ZeroInit,
                       gamma, init_agent, round_phase1, round_phase2,
                       schedule_to_dict)
from .subproblem import EpigraphSolver, LocalInfeasible, NumericalFailure


class SolverFailure(RuntimeError):
    """A local solve failed mid-run; carries the agent and round."""

    def __init__(self, agent_id: int, round_index: int, cause: Exception):
        super().__init__(f"agent {agent_id} failed at round {round_index}: {cause}")
        self.agent_id = agent_id
        self.round_index = round_index
        self.cause = cause


class InsufficientData(ValueError):
    """Not enough trace rows for the requested fit."""


@dataclass
class RunConfig:
    iterations: int = 1000
    schedule: StepSchedule = field(default_factory=PowerLaw)
    seed: int = 0
    tol: float = lp.DEFAULT_TOL
    record_every: int = 1
    lambda_init: LambdaInit = field(default_factory=ZeroInit)
    target: float = 1e-3
    early_stop: bool = False
    patience: int = 20
    record_agent_rho: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "schedule": schedule_to_dict(self.schedule),
            "seed": self.seed,
            "tol": self.tol,
            "record_every": self.record_every,
            "lambda_init": self.lambda_init.to_dict(),
            "target": self.target,
            "early_stop": self.early_stop,
            "patience": self.patience,
            "record_agent_rho": self.record_agent_rho,
        }


@dataclass
class RunTrace:
    """Recorded rows; cost_error columns exist only when an oracle value was
    supplied, per-agent rho columns only when requested."""

    has_oracle: bool
    n_agents: int
    with_agent_rho: bool = False
    t: list[int] = field(default_factory=list)
    sum_rho: list[float] = field(default_factory=list)
    peak: list[float] = field(default_factory=list)
    cost_error: list[float] = field(default_factory=list)
    max_violation: list[float] = field(default_factory=list)
    agent_rho: list[np.ndarray] = field(default_factory=list)

    def append(self, t, sum_rho, peak, max_violation, cost_error=None, rhos=None):
        self.t.append(int(t))
        self.sum_rho.append(float(sum_rho))
        self.peak.append(float(peak))
        self.max_violation.append(float(max_violation))
        if self.has_oracle:
            self.cost_error.append(float(cost_error))
        if self.with_agent_rho:
            self.agent_rho.append(np.asarray(rhos, dtype=float))

    def __len__(self):
        return len(self.t)

    def header(self) -> list[str]:
        cols = ["t", "sum_rho", "P_t"]
        if self.has_oracle:
            cols.append("cost_error")
        cols.append("max_violation")
        if self.with_agent_rho:
            cols.extend(f"rho_{i}" for i in range(self.n_agents))
        return cols

    def to_csv(self, path) -> None:
        # repr() of a float is its shortest round-trip decimal form, so a
        # replay from file reproduces the numbers exactly.
        with open(path, "w") as fh:
            fh.write(",".join(self.header()) + "\n")
            for k in range(len(self)):
                row = [str(self.t[k]), repr(self.sum_rho[k]), repr(self.peak[k])]
                if self.has_oracle:
                    row.append(repr(self.cost_error[k]))
                row.append(repr(self.max_violation[k]))
                if self.with_agent_rho:
                    row.extend(repr(float(v)) for v in self.agent_rho[k])
                fh.write(",".join(row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "RunTrace":
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
        if not lines:
            raise ValueError(f"empty trace file: {path}")
        header = lines[0].split(",")
        if header[:3] != ["t", "sum_rho", "P_t"]:
            raise ValueError(f"unrecognized trace header: {lines[0]!r}")
        has_oracle = "cost_error" in header
        rho_cols = [c for c in header if c.startswith("rho_")]
        trace = cls(has_oracle=has_oracle, n_agents=len(rho_cols),
                    with_agent_rho=bool(rho_cols))
        idx = {c: i for i, c in enumerate(header)}
        for lineno, line in enumerate(lines[1:], 2):
            parts = line.split(",")
            if len(parts) != len(header):
                raise ValueError(f"row {lineno}: expected {len(header)} fields")
            trace.append(
                t=int(parts[idx["t"]]),
                sum_rho=float(parts[idx["sum_rho"]]),
                peak=float(parts[idx["P_t"]]),
                max_violation=float(parts[idx["max_violation"]]),
                cost_error=float(parts[idx["cost_error"]]) if has_oracle else None,
                rhos=[float(parts[idx[c]]) for c in rho_cols] or None,
            )
        return trace


@dataclass
class InvariantAudit:
    """Worst-case values over every iteration (not just recorded ones)."""

    max_coupling_violation: float = -np.inf
    max_peak_minus_sum: float = -np.inf
    min_peak_minus_oracle: float | None = None
    max_mu_sum_error: float = 0.0
    min_mu_component: float = 0.0
    max_lambda_conservation: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "max_coupling_violation": self.max_coupling_violation,
            "max_peak_minus_sum": self.max_peak_minus_sum,
            "min_peak_minus_oracle": self.min_peak_minus_oracle,
            "max_mu_sum_error": self.max_mu_sum_error,
            "min_mu_component": self.min_mu_component,
            "max_lambda_conservation": self.max_lambda_conservation,
        }


@dataclass
class FinalReport:
    x_final: list[np.ndarray]
    sum_rho: float
    peak: float
    iterations_run: int
    wall_time: float
    converged: bool | None
    oracle_value: float | None
    audit: InvariantAudit

    def to_json_dict(self) -> dict:
        # wall_time is intentionally left out: reports from identical
        # configurations must be byte-identical.
        return {
            "sum_rho": self.sum_rho,
            "P_t": self.peak,
            "iterations_run": self.iterations_run,
            "converged": self.converged,
            "oracle_value": self.oracle_value,
            "audit": self.audit.to_json_dict(),
            "x_final": [x.tolist() for x in self.x_final],
        }


def relative_error(sum_rho: float, oracle_value: float) -> float:
    return abs(sum_rho - oracle_value) / max(1.0, abs(oracle_value))


def run(problem: MinMaxProblem, g: Graph, cfg: RunConfig,
        oracle_value: float | None = None) -> tuple[RunTrace, FinalReport]:
    """Execute synchronous rounds for every agent and collect metrics.

    Deterministic for fixed inputs. Early stopping (when enabled and an
    oracle value is available) fires after `patience` consecutive recorded
    rows within the relative target.
    """
    if g.n != problem.n_agents:
        raise ValueError(f"graph has {g.n} nodes but problem has {problem.n_agents} agents")
    if not g.is_connected():
        raise ValueError("communication graph must be connected")

    start = time.perf_counter()
    n = problem.n_agents
    solvers = [EpigraphSolver(spec, cfg.tol) for spec in problem.agents]
    states: list[AgentState] = [init_agent(i, g, problem.agents[i], cfg.lambda_init)
                                for i in range(n)]
    neighbor_lists = [g.neighbors(i) for i in range(n)]

    trace = RunTrace(has_oracle=oracle_value is not None, n_agents=n,
                     with_agent_rho=cfg.record_agent_rho)
    audit = InvariantAudit()
    streak = 0
    iterations_run = 0

    for t in range(cfg.iterations):
        # Phase 1: every agent reads its neighbors' current outgoing
        # multipliers (addressed to it) and re-solves. No one writes
        # lambda_out here, so plain references are safe.
        for i in range(n):
            incoming = {j: states[j].lambda_out[i] for j in neighbor_lists[i]}
            try:
                round_phase1(states[i], solvers[i], incoming)
            except (LocalInfeasible, NumericalFailure) as exc:
                raise SolverFailure(i, t, exc) from exc

        # Phase 2: all mu vectors are now fresh; update edge multipliers.
        gamma_t = gamma(cfg.schedule, t)
        for i in range(n):
            incoming_mu = {j: states[j].mu for j in neighbor_lists[i]}
            round_phase2(states[i], incoming_mu, gamma_t)

        iterations_run = t + 1

        # Metrics and invariant audit, every iteration.
        loads = problem.slot_loads([s.x for s in states])
        sum_rho = float(sum(s.rho for s in states))
        peak = float(loads.max())
        max_violation = float((loads - sum_rho).max())
        audit.max_coupling_violation = max(audit.max_coupling_violation, max_violation)
        audit.max_peak_minus_sum = max(audit.max_peak_minus_sum, peak - sum_rho)
        if oracle_value is not None:
            gap = peak - oracle_value
            audit.min_peak_minus_oracle = (gap if audit.min_peak_minus_oracle is None
                                           else min(audit.min_peak_minus_oracle, gap))
        for s in states:
            audit.max_mu_sum_error = max(audit.max_mu_sum_error,
                                         abs(float(s.mu.sum()) - 1.0))
            audit.min_mu_component = min(audit.min_mu_component, float(s.mu.min()))
        net = np.zeros(problem.horizon)
        for i in range(n):
            for j in neighbor_lists[i]:
                net += states[i].lambda_out[j] - states[j].lambda_out[i]
        audit.max_lambda_conservation = max(audit.max_lambda_conservation,
                                            float(np.abs(net).max()))

        recorded = (t % cfg.record_every == 0) or (t == cfg.iterations - 1)
        if recorded:
            cost_error = (abs(sum_rho - oracle_value)
                          if oracle_value is not None else None)
            trace.append(t=t + 1, sum_rho=sum_rho, peak=peak,
                         max_violation=max_violation, cost_error=cost_error,
                         rhos=[s.rho for s in states] if cfg.record_agent_rho else None)
            if cfg.early_stop and oracle_value is not None:
                if relative_error(sum_rho, oracle_value) <= cfg.target:
                    streak += 1
                else:
                    streak = 0
                if streak >= cfg.patience:
                    break

    final_sum_rho = trace.sum_rho[-1]
    converged = None
    if oracle_value is not None:
        converged = relative_error(final_sum_rho, oracle_value) <= cfg.target
    report = FinalReport(
        x_final=[s.x.copy() for s in states],
        sum_rho=final_sum_rho,
        peak=trace.peak[-1],
        iterations_run=iterations_run,
        wall_time=time.perf_counter() - start,
        converged=converged,
        oracle_value=oracle_value,
        audit=audit,
    )
    return trace, report


def rate_fit(trace: RunTrace, window: float = 0.5) -> float:
    """Log-log slope of the running-minimum cost-error envelope over the
    trailing `window` fraction of recorded rows.

    The envelope (best error so far) is used because subgradient steps are
    not descent steps and the raw error oscillates.
    """
    if not trace.has_oracle:
        raise InsufficientData("trace has no cost_error column")
    if not (0 < window <= 1):
        raise ValueError("window must lie in (0, 1]")
    err = np.asarray(trace.cost_error, dtype=float)
    if np.count_nonzero(err > 0) < 50:
        raise InsufficientData("need at least 50 rows with positive cost error")
    envelope = np.minimum.accumulate(err)
    ts = np.asarray(trace.t, dtype=float)
    start = int(len(ts) * (1.0 - window))
    mask = envelope[start:] > 0
    if np.count_nonzero(mask) < 2:
        raise InsufficientData("envelope vanished over the fit window")
    log_t = np.log(ts[start:][mask])
    log_e = np.log(envelope[start:][mask])
    slope, _ = np.polyfit(log_t, log_e, 1)
    return float(slope)
