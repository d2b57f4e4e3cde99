"""Agent-local mathematics: the epigraph subproblem and its dual evaluators.

Each round an agent minimizes a private peak bound rho subject to its own
feasible set and, per slot, cost-plus-edge-offset <= rho. The multipliers of
those S coupling rows form a probability vector (the epigraph variable is
free, so its stationarity condition pins their sum to one); they are the
subgradient ingredient exchanged with neighbors.

Affine costs give one fixed LP per agent whose coupling right-hand side is
the only thing that changes between rounds, which WarmLp exploits. A convex
quadratic cost makes the coupling row nonlinear; it is handled by adaptive
tangent cuts refined until the true constraint is satisfied, and the slot
multiplier is recovered as the sum of its cut multipliers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lp
from .model import AgentSpec


class LocalInfeasible(RuntimeError):
    """Local feasible set empty; impossible for a validated spec."""


class NumericalFailure(RuntimeError):
    """A subproblem solve did not certify at the requested tolerance."""


@dataclass
class LambdaExchange:
    """Edge multipliers seen by one agent: its own outgoing lambda per
    neighbor and the incoming ones gathered from them."""

    horizon: int
    outgoing: dict[int, np.ndarray] = field(default_factory=dict)
    incoming: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.outgoing) != set(self.incoming):
            raise ValueError("outgoing and incoming neighbor sets differ")
        for d in (self.outgoing, self.incoming):
            for j, vec in d.items():
                v = np.asarray(vec, dtype=float)
                if v.shape != (self.horizon,):
                    raise ValueError(f"multiplier for neighbor {j} has shape "
                                     f"{v.shape}, expected ({self.horizon},)")
                d[j] = v


def lambda_delta(exchange: LambdaExchange) -> np.ndarray:
    """Per-slot net edge offset: sum_j (outgoing_j - incoming_j)."""
    delta = np.zeros(exchange.horizon)
    for j, out in exchange.outgoing.items():
        delta += out - exchange.incoming[j]
    return delta


@dataclass
class LocalPrimalDual:
    """Primal (x, rho) and coupling-row multipliers mu of one local solve."""

    x: np.ndarray
    rho: float
    mu: np.ndarray
    kkt_residuals: lp.KktResiduals


class EpigraphSolver:
    """Reusable solver for one agent's epigraph subproblem
    min rho  s.t.  x in X,  g_s(x_s) + delta_s <= rho  for every slot."""

    # cap on tangent-cut refinement rounds for quadratic costs
    MAX_REFINE = 60

    def __init__(self, spec: AgentSpec, tol: float = lp.DEFAULT_TOL):
        self.spec = spec
        self.tol = tol
        S = spec.horizon
        self._rho_bounds = (np.append(spec.lower, -np.inf),
                            np.append(spec.upper, np.inf))
        if spec.all_affine:
            rates = np.array([c.rate for c in spec.costs])
            G = np.zeros((spec.b.size + S, S + 1))
            G[:spec.b.size, :S] = spec.A
            G[spec.b.size:, :S] = np.diag(rates)
            G[spec.b.size:, S] = -1.0
            base = lp.LpProblem(
                c=np.append(np.zeros(S), 1.0),
                G=G, h=np.append(spec.b, np.zeros(S)),
                lb=self._rho_bounds[0], ub=self._rho_bounds[1],
            )
            self._warm = lp.WarmLp(base, mutable_rows=np.arange(spec.b.size, spec.b.size + S),
                                   tol=tol)
        else:
            self._warm = None

    def solve(self, delta: np.ndarray) -> LocalPrimalDual:
        delta = np.asarray(delta, dtype=float).ravel()
        if delta.size != self.spec.horizon:
            raise ValueError("delta length must equal the horizon")
        if self._warm is not None:
            sol = self._warm.solve(-delta)
            return self._extract(sol, n_coupling_from=self.spec.b.size,
                                 slot_of_row=None)
        return self._solve_with_cuts(delta)

    def _extract(self, sol: lp.LpSolution, n_coupling_from: int, slot_of_row):
        if sol.status is lp.SolveStatus.INFEASIBLE:
            raise LocalInfeasible("epigraph subproblem infeasible; spec was not validated")
        if not sol.solved:
            raise NumericalFailure(f"local solve failed: {sol.status.value} {sol.message}")
        S = self.spec.horizon
        x = sol.z[:S]
        rho = float(sol.z[S])
        row_duals = sol.duals_ineq[n_coupling_from:]
        if slot_of_row is None:
            mu = np.array(row_duals, dtype=float)
        else:
            mu = np.zeros(S)
            np.add.at(mu, slot_of_row, row_duals)
        return LocalPrimalDual(x=x, rho=rho, mu=mu, kkt_residuals=sol.kkt_residuals)

    def _solve_with_cuts(self, delta: np.ndarray) -> LocalPrimalDual:
        spec = self.spec
        S = spec.horizon
        mid = 0.5 * (spec.lower + spec.upper)
        points = [{float(spec.lower[s]), float(spec.upper[s]), float(mid[s])}
                  if not spec.costs[s].is_affine else {0.0}
                  for s in range(S)]

        for _ in range(self.MAX_REFINE):
            rows, rhs, slot_of_row = [], [], []
            for s in range(S):
                cost = spec.costs[s]
                for xh in sorted(points[s]):
                    # tangent g(xh) + g'(xh)(x_s - xh) - rho <= -delta_s
                    slope = float(cost.derivative(xh))
                    offset = float(cost.evaluate(xh)) - slope * xh
                    row = np.zeros(S + 1)
                    row[s] = slope
                    row[S] = -1.0
                    rows.append(row)
                    rhs.append(-delta[s] - offset)
                    slot_of_row.append(s)
            m_A = spec.b.size
            G = np.vstack([np.hstack([spec.A, np.zeros((m_A, 1))]), np.array(rows)])
            problem = lp.LpProblem(
                c=np.append(np.zeros(S), 1.0),
                G=G, h=np.concatenate([spec.b, np.array(rhs)]),
                lb=self._rho_bounds[0], ub=self._rho_bounds[1],
            )
            sol = lp.solve(problem, self.tol)
            result = self._extract(sol, n_coupling_from=m_A,
                                   slot_of_row=np.array(slot_of_row))
            viol = spec.eval_costs(result.x) + delta - result.rho
            if float(np.max(viol)) <= max(self.tol, 1e-10):
                return result
            for s in np.flatnonzero(viol > max(self.tol, 1e-10)):
                points[s].add(float(result.x[s]))
        raise NumericalFailure("tangent-cut refinement did not converge")


def solve_local(spec: AgentSpec, delta: np.ndarray,
                tol: float = lp.DEFAULT_TOL) -> LocalPrimalDual:
    """One-shot epigraph solve; see EpigraphSolver for the reusable form."""
    return EpigraphSolver(spec, tol).solve(delta)


def eval_qi(spec: AgentSpec, mu: np.ndarray, tol: float = lp.DEFAULT_TOL) -> float:
    """Weighted-cost minimum min_{x in X} sum_s mu_s g_s(x_s), mu >= 0.

    This is the agent's contribution to the dual of the centralized epigraph
    problem: concave and piecewise-linear in mu for affine costs.
    """
    mu = np.asarray(mu, dtype=float).ravel()
    if mu.size != spec.horizon:
        raise ValueError("mu length must equal the horizon")
    if np.min(mu, initial=0.0) < -1e-9:
        raise ValueError("mu must be nonnegative")
    mu = np.maximum(mu, 0.0)

    lin = np.zeros(spec.horizon)
    quad = np.zeros(spec.horizon)
    for s, cost in enumerate(spec.costs):
        if cost.is_affine:
            lin[s] = mu[s] * cost.rate
        else:
            lin[s] = mu[s] * cost.slope
            quad[s] = 2.0 * mu[s] * cost.curvature
    problem = lp.LpProblem(
        c=lin, G=spec.A if spec.b.size else None, h=spec.b if spec.b.size else None,
        lb=spec.lower, ub=spec.upper,
        Q=np.diag(quad) if np.any(quad) else None,
    )
    sol = lp.solve(problem, tol if not np.any(quad) else max(tol, 1e-7))
    if not sol.solved:
        raise NumericalFailure(f"dual-function evaluation failed: {sol.status.value}")
    return float(sol.objective_value)


def eval_eta_i(spec: AgentSpec, exchange: LambdaExchange,
               tol: float = lp.DEFAULT_TOL) -> float:
    """Optimal epigraph value under the exchange's net edge offset.

    Equals the maximum over the probability simplex of
    eval_qi(spec, mu) + mu . lambda_delta(exchange); the epigraph solve
    realizes that maximum through its coupling-row duals.
    """
    return solve_local(spec, lambda_delta(exchange), tol).rho
