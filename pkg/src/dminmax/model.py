"""Problem data model: per-agent feasible sets and per-slot convex costs.

An instance couples N agents twice over: each slot's total cost sums
contributions from every agent, while each agent's own constraint set ties
its slots together. Costs are scalar affine or convex-quadratic functions of
the agent's decision in that slot, which keeps every downstream subproblem
an LP (or a QP after lifting).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import lp


@dataclass(frozen=True)
class AffineCost:
    """g(x) = rate * x."""

    rate: float

    def evaluate(self, x):
        return self.rate * x

    def derivative(self, x):
        return self.rate * np.ones_like(np.asarray(x, dtype=float))

    is_affine = True

    def to_json_dict(self):
        return {"kind": "affine", "rate": self.rate}


@dataclass(frozen=True)
class QuadraticCost:
    """g(x) = curvature * x^2 + slope * x, curvature >= 0."""

    curvature: float
    slope: float = 0.0

    def __post_init__(self):
        if self.curvature < 0:
            raise ValueError("curvature must be nonnegative for convexity")

    def evaluate(self, x):
        return self.curvature * x * x + self.slope * x

    def derivative(self, x):
        return 2.0 * self.curvature * x + self.slope

    is_affine = False

    def to_json_dict(self):
        return {"kind": "quadratic", "curvature": self.curvature, "slope": self.slope}


ScalarCost = AffineCost | QuadraticCost


def cost_from_json_dict(d: dict) -> ScalarCost:
    kind = d.get("kind")
    if kind == "affine":
        return AffineCost(rate=float(d["rate"]))
    if kind == "quadratic":
        return QuadraticCost(curvature=float(d["curvature"]),
                             slope=float(d.get("slope", 0.0)))
    raise ValueError(f"unknown cost kind {kind!r}")


@dataclass
class AgentSpec:
    """One agent's feasible set {x : A x <= b, lower <= x <= upper} and its
    per-slot costs.

    Box bounds must be finite (they are what guarantees compactness);
    emptiness of the feasible set is a report-level concern handled by
    :func:`validate`, not a construction error.
    """

    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    costs: list[ScalarCost] = field(default_factory=list)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        S = self.lower.size
        if self.A is None:
            self.A = np.zeros((0, S))
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if self.A.shape[1] != S and self.A.size == 0:
            self.A = self.A.reshape(0, S)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.costs = list(self.costs)
        if self.upper.size != S:
            raise ValueError("lower/upper length mismatch")
        if self.A.shape != (self.b.size, S):
            raise ValueError(f"A {self.A.shape} inconsistent with b {self.b.shape}")
        if len(self.costs) != S:
            raise ValueError(f"expected {S} cost entries, got {len(self.costs)}")
        if not (np.isfinite(self.lower).all() and np.isfinite(self.upper).all()):
            raise ValueError("box bounds must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def horizon(self) -> int:
        return self.lower.size

    @property
    def all_affine(self) -> bool:
        return all(c.is_affine for c in self.costs)

    def eval_cost(self, s: int, x_s: float) -> float:
        if not (0 <= s < self.horizon):
            raise IndexError(f"slot {s} out of range for horizon {self.horizon}")
        return float(self.costs[s].evaluate(x_s))

    def eval_costs(self, x: np.ndarray) -> np.ndarray:
        """Vector of g_s(x_s) over the whole horizon."""
        return np.array([c.evaluate(xv) for c, xv in zip(self.costs, x)])

    def contains(self, x: np.ndarray, tol: float = 1e-8) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            return False
        return not (self.b.size and np.any(self.A @ x > self.b + tol))

    def to_json_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "costs": [c.to_json_dict() for c in self.costs],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AgentSpec":
        return cls(
            A=np.asarray(d["A"], dtype=float),
            b=np.asarray(d["b"], dtype=float),
            lower=np.asarray(d["lower"], dtype=float),
            upper=np.asarray(d["upper"], dtype=float),
            costs=[cost_from_json_dict(c) for c in d["costs"]],
        )


@dataclass
class MinMaxProblem:
    """Minimize the worst slot-total cost over all agents' feasible sets."""

    agents: list[AgentSpec]

    def __post_init__(self):
        if not self.agents:
            raise ValueError("need at least one agent")
        horizons = {a.horizon for a in self.agents}
        if len(horizons) != 1:
            raise ValueError(f"agents disagree on horizon: {sorted(horizons)}")

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def horizon(self) -> int:
        return self.agents[0].horizon

    @property
    def all_affine(self) -> bool:
        return all(a.all_affine for a in self.agents)

    def slot_loads(self, xs: list[np.ndarray]) -> np.ndarray:
        """Per-slot total cost sum_i g_s(x^i_s) for one point per agent."""
        total = np.zeros(self.horizon)
        for spec, x in zip(self.agents, xs):
            total += spec.eval_costs(x)
        return total

    def to_json_dict(self) -> dict:
        return {"S": self.horizon,
                "agents": [a.to_json_dict() for a in self.agents]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "MinMaxProblem":
        problem = cls(agents=[AgentSpec.from_json_dict(a) for a in d["agents"]])
        if "S" in d and int(d["S"]) != problem.horizon:
            raise ValueError("declared horizon disagrees with agent data")
        return problem

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_json_dict())
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text_or_path: str) -> "MinMaxProblem":
        text = text_or_path
        if not text_or_path.lstrip().startswith("{"):
            with open(text_or_path) as fh:
                text = fh.read()
        return cls.from_json_dict(json.loads(text))


@dataclass
class AgentReport:
    feasible: bool
    bounded: bool
    costs_convex: bool
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.feasible and self.bounded and self.costs_convex


@dataclass
class ValidationReport:
    agents: list[AgentReport]

    @property
    def ok(self) -> bool:
        return all(a.ok for a in self.agents)

    def summary(self) -> str:
        bad = [i for i, a in enumerate(self.agents) if not a.ok]
        if not bad:
            return f"ok ({len(self.agents)} agents)"
        return "problems at agents " + ", ".join(
            f"{i}: {self.agents[i].message or 'failed'}" for i in bad)


def validate(problem: MinMaxProblem, tol: float = lp.DEFAULT_TOL) -> ValidationReport:
    """Report per-agent feasibility (phase-1 LP), boundedness and convexity."""
    reports = []
    for spec in problem.agents:
        bounded = bool(np.isfinite(spec.lower).all() and np.isfinite(spec.upper).all())
        convex = all(c.is_affine or c.curvature >= 0 for c in spec.costs)
        feasible = False
        message = ""
        if bounded:
            phase1 = lp.LpProblem(c=np.zeros(spec.horizon), G=spec.A, h=spec.b,
                                  lb=spec.lower, ub=spec.upper)
            status = lp.solve(phase1, tol).status
            feasible = status is lp.SolveStatus.SOLVED
            if not feasible:
                message = f"feasibility LP returned {status.value}"
        else:
            message = "unbounded box"
        if not convex:
            message = (message + "; " if message else "") + "nonconvex cost"
        reports.append(AgentReport(feasible, bounded, convex, message))
    return ValidationReport(reports)


def eval_cost(spec: AgentSpec, s: int, x_s: float) -> float:
    return spec.eval_cost(s, x_s)


def tiny_problem() -> MinMaxProblem:
    """Two agents, two slots: rates 1 and 2, shared set
    {x in [0,1]^2 : x_1 + x_2 >= 1}. Optimal peak is 1.5, split evenly."""
    agents = []
    for rate in (1.0, 2.0):
        agents.append(AgentSpec(
            A=np.array([[-1.0, -1.0]]),
            b=np.array([-1.0]),
            lower=np.zeros(2),
            upper=np.ones(2),
            costs=[AffineCost(rate), AffineCost(rate)],
        ))
    return MinMaxProblem(agents=agents)
