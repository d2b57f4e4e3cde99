"""Centralized ground truth: the full epigraph program over all agents.

Stacks every agent's variables with one shared peak variable, adds the
per-slot total-cost-below-peak rows, and solves the whole thing in one LP.
The multipliers of those rows form a probability vector (same stationarity
argument as in the local subproblem) and certify strong duality against the
sum of the agents' dual functions.

Exists as ground truth for experiments, not as a scalable competitor.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import lp
from .model import MinMaxProblem
from .subproblem import NumericalFailure, eval_qi


@dataclass
class OracleResult:
    P_star: float
    x_star: list[np.ndarray]
    mu_star: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "P_star": self.P_star,
            "x_star": [x.tolist() for x in self.x_star],
            "mu_star": self.mu_star.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "OracleResult":
        return cls(
            P_star=float(d["P_star"]),
            x_star=[np.asarray(x, dtype=float) for x in d["x_star"]],
            mu_star=np.asarray(d["mu_star"], dtype=float),
        )


def problem_fingerprint(problem: MinMaxProblem) -> str:
    """Content hash of the serialized problem, for result caching."""
    text = json.dumps(problem.to_json_dict(), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def _assemble_affine(problem: MinMaxProblem):
    n, S = problem.n_agents, problem.horizon
    nv = n * S + 1
    blocks = []
    rhs = []
    for i, spec in enumerate(problem.agents):
        m = spec.b.size
        if m:
            block = np.zeros((m, nv))
            block[:, i * S:(i + 1) * S] = spec.A
            blocks.append(block)
            rhs.append(spec.b)
    coupling = np.zeros((S, nv))
    for i, spec in enumerate(problem.agents):
        coupling[np.arange(S), i * S + np.arange(S)] = [c.rate for c in spec.costs]
    coupling[:, -1] = -1.0
    blocks.append(coupling)
    rhs.append(np.zeros(S))
    lb = np.concatenate([s.lower for s in problem.agents] + [[-np.inf]])
    ub = np.concatenate([s.upper for s in problem.agents] + [[np.inf]])
    c = np.zeros(nv)
    c[-1] = 1.0
    n_side = sum(s.b.size for s in problem.agents)
    return lp.LpProblem(c=c, G=np.vstack(blocks), h=np.concatenate(rhs),
                        lb=lb, ub=ub), n_side


def _solve_affine(problem: MinMaxProblem, tol: float) -> OracleResult:
    full, n_side = _assemble_affine(problem)
    sol = lp.solve(full, tol)
    if not sol.solved:
        raise NumericalFailure(f"centralized solve failed: {sol.status.value} {sol.message}")
    S = problem.horizon
    xs = [sol.z[i * S:(i + 1) * S].copy() for i in range(problem.n_agents)]
    mu = np.array(sol.duals_ineq[n_side:n_side + S], dtype=float)
    return OracleResult(P_star=float(sol.objective_value), x_star=xs, mu_star=mu)


def _solve_lifted(problem: MinMaxProblem, tol: float) -> OracleResult:
    """Quadratic costs: lift each nonlinear slot cost onto an auxiliary
    variable bounded below by tangent cuts, refined until the lifted values
    match the true costs."""
    n, S = problem.n_agents, problem.horizon
    lifted = [(i, s) for i, spec in enumerate(problem.agents)
              for s in range(S) if not spec.costs[s].is_affine]
    lift_pos = {key: k for k, key in enumerate(lifted)}
    nv = n * S + 1 + len(lifted)
    p_col = n * S

    points = {key: {float(problem.agents[key[0]].lower[key[1]]),
                    float(problem.agents[key[0]].upper[key[1]]),
                    float(0.5 * (problem.agents[key[0]].lower[key[1]]
                                 + problem.agents[key[0]].upper[key[1]]))}
              for key in lifted}
    cut_tol = max(tol, 1e-10)

    for _ in range(80):
        rows, rhs = [], []
        for i, spec in enumerate(problem.agents):
            m = spec.b.size
            if m:
                block = np.zeros((m, nv))
                block[:, i * S:(i + 1) * S] = spec.A
                rows.append(block)
                rhs.append(spec.b)
        n_side = sum(len(r) for r in rows) if rows else 0
        coupling = np.zeros((S, nv))
        for i, spec in enumerate(problem.agents):
            for s in range(S):
                if spec.costs[s].is_affine:
                    coupling[s, i * S + s] = spec.costs[s].rate
                else:
                    coupling[s, p_col + 1 + lift_pos[(i, s)]] = 1.0
        coupling[:, p_col] = -1.0
        rows.append(coupling)
        rhs.append(np.zeros(S))
        for (i, s), k in lift_pos.items():
            cost = problem.agents[i].costs[s]
            for xh in sorted(points[(i, s)]):
                slope = float(cost.derivative(xh))
                offset = float(cost.evaluate(xh)) - slope * xh
                row = np.zeros(nv)
                row[i * S + s] = slope
                row[p_col + 1 + k] = -1.0
                rows.append(row[None, :])
                rhs.append(np.array([-offset]))
        lb = np.concatenate([s.lower for s in problem.agents]
                            + [[-np.inf]] + [[-np.inf]] * len(lifted))
        ub = np.concatenate([s.upper for s in problem.agents]
                            + [[np.inf]] + [[np.inf]] * len(lifted))
        c = np.zeros(nv)
        c[p_col] = 1.0
        full = lp.LpProblem(c=c, G=np.vstack(rows), h=np.concatenate(rhs), lb=lb, ub=ub)
        sol = lp.solve(full, tol)
        if not sol.solved:
            raise NumericalFailure(f"centralized solve failed: {sol.status.value}")

        gaps = {}
        for (i, s), k in lift_pos.items():
            x_is = sol.z[i * S + s]
            w = sol.z[p_col + 1 + k]
            gaps[(i, s)] = float(problem.agents[i].costs[s].evaluate(x_is)) - w
        slot_gap = np.zeros(S)
        for (i, s), gval in gaps.items():
            slot_gap[s] += max(gval, 0.0)
        if max(gaps.values(), default=0.0) <= cut_tol and slot_gap.max(initial=0.0) <= 10 * cut_tol:
            xs = [sol.z[i * S:(i + 1) * S].copy() for i in range(n)]
            mu = np.array(sol.duals_ineq[n_side:n_side + S], dtype=float)
            return OracleResult(P_star=float(sol.objective_value), x_star=xs, mu_star=mu)
        for key, gval in gaps.items():
            if gval > cut_tol:
                i, s = key
                points[key].add(float(sol.z[i * S + s]))
    raise NumericalFailure("lifted-cost refinement did not converge")


def solve_centralized(problem: MinMaxProblem, tol: float = lp.DEFAULT_TOL) -> OracleResult:
    """Optimal peak, one optimal point per agent, and the coupling-row
    multipliers of the centralized epigraph program."""
    if problem.all_affine:
        return _solve_affine(problem, tol)
    return _solve_lifted(problem, tol)


def strong_duality_check(problem: MinMaxProblem, result: OracleResult,
                         tol: float = 1e-6) -> bool:
    """Evaluate the separable dual at mu_star and compare with P_star."""
    dual_value = sum(eval_qi(spec, result.mu_star) for spec in problem.agents)
    return abs(dual_value - result.P_star) <= tol


def save_cache(path, problem: MinMaxProblem, result: OracleResult) -> None:
    payload = {"fingerprint": problem_fingerprint(problem),
               "result": result.to_json_dict()}
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_cache(path, problem: MinMaxProblem) -> OracleResult | None:
    """Cached result, or None when missing or stale."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return None
    if payload.get("fingerprint") != problem_fingerprint(problem):
        return None
    return OracleResult.from_json_dict(payload["result"])
