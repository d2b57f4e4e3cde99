"""LP/QP solving with dual multipliers and independent optimality certificates.

Every subproblem in the package funnels through :func:`solve`, so this module
is deliberately paranoid: each solution is re-checked against the KKT
conditions recomputed from the raw problem data, and a solution is reported
as ``SOLVED`` only when those residuals pass the requested tolerance.

Linear programs go to HiGHS (dual simplex, single-threaded, deterministic);
problems with a quadratic objective go to cvxopt's cone solver.
:class:`WarmLp` re-solves one model many times with changing inequality
right-hand sides, hot-starting from the previous basis; its results are
certified by the same KKT check and fall back to the one-shot path whenever
certification fails, so the fast path never weakens correctness.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import linprog

DEFAULT_TOL = 1e-9

# Feasibility tolerances handed to the backends; tighter than DEFAULT_TOL so
# that per-agent residuals stay far below run-level invariant budgets even
# after summing over agents.
_BACKEND_FEAS_TOL = 1e-10


class SolveStatus(Enum):
    SOLVED = "solved"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class KktResiduals:
    """Max-norm residuals of the four KKT blocks."""

    primal_feas: float
    dual_feas: float
    complementarity: float
    stationarity: float

    @property
    def worst(self) -> float:
        return max(self.primal_feas, self.dual_feas,
                   self.complementarity, self.stationarity)

    def within(self, tol: float) -> bool:
        return self.worst <= tol


def _as_matrix(a, ncols):
    if a is None:
        return np.zeros((0, ncols))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return a


def _as_vector(v, length=None):
    if v is None:
        return np.zeros(0 if length is None else length)
    return np.asarray(v, dtype=float).ravel()


@dataclass
class LpProblem:
    """min c'z (+ 0.5 z'Qz)  s.t.  G z <= h,  A_eq z = b_eq,  lb <= z <= ub.

    ``Q`` must be symmetric positive semidefinite when present. Infinite
    bounds are allowed (use +-inf).
    """

    c: np.ndarray
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    Q: np.ndarray | None = None

    def __post_init__(self):
        self.c = _as_vector(self.c)
        n = self.c.size
        self.G = _as_matrix(self.G, n)
        self.h = _as_vector(self.h)
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_eq = _as_vector(self.b_eq)
        self.lb = np.full(n, -np.inf) if self.lb is None else _as_vector(self.lb)
        self.ub = np.full(n, np.inf) if self.ub is None else _as_vector(self.ub)
        if self.Q is not None:
            self.Q = np.asarray(self.Q, dtype=float)
        self._check_dims()

    def _check_dims(self):
        n = self.n_vars
        if self.G.shape != (self.h.size, n):
            raise ValueError(f"inequality block shape mismatch: G {self.G.shape}, h {self.h.shape}")
        if self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError(f"equality block shape mismatch: A_eq {self.A_eq.shape}, b_eq {self.b_eq.shape}")
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bound vectors must match the variable count")
        if self.Q is not None and self.Q.shape != (n, n):
            raise ValueError("quadratic term must be n-by-n")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def is_quadratic(self) -> bool:
        return self.Q is not None and np.any(self.Q)

    def objective_at(self, z: np.ndarray) -> float:
        val = float(self.c @ z)
        if self.is_quadratic:
            val += 0.5 * float(z @ self.Q @ z)
        return val

    def gradient_at(self, z: np.ndarray) -> np.ndarray:
        if self.is_quadratic:
            return self.c + self.Q @ z
        return self.c

    def to_json_dict(self) -> dict:
        d = {
            "c": self.c.tolist(),
            "G": self.G.tolist(),
            "h": self.h.tolist(),
            "A_eq": self.A_eq.tolist(),
            "b_eq": self.b_eq.tolist(),
            "lb": self.lb.tolist(),
            "ub": self.ub.tolist(),
        }
        if self.Q is not None:
            d["Q"] = self.Q.tolist()
        return d


@dataclass
class LpSolution:
    status: SolveStatus
    z: np.ndarray | None = None
    objective_value: float | None = None
    duals_ineq: np.ndarray | None = None
    duals_eq: np.ndarray | None = None
    duals_lower: np.ndarray | None = None
    duals_upper: np.ndarray | None = None
    kkt_residuals: KktResiduals | None = None
    message: str = ""

    @property
    def solved(self) -> bool:
        return self.status is SolveStatus.SOLVED


def check_kkt(problem: LpProblem, candidate: LpSolution) -> KktResiduals:
    """Recompute the four KKT residual blocks from scratch.

    Independent of any solver internals: uses only the problem data and the
    candidate's primal/dual vectors. Missing dual blocks are treated as zero.
    """
    z = np.asarray(candidate.z, dtype=float)
    n = problem.n_vars
    mu = _as_vector(candidate.duals_ineq, problem.h.size)
    nu = _as_vector(candidate.duals_eq, problem.b_eq.size)
    pl = _as_vector(candidate.duals_lower, n)
    pu = _as_vector(candidate.duals_upper, n)

    slack_ineq = problem.G @ z - problem.h if problem.h.size else np.zeros(0)
    res_eq = problem.A_eq @ z - problem.b_eq if problem.b_eq.size else np.zeros(0)
    lo = problem.lb - z
    hi = z - problem.ub
    primal = max(
        float(np.max(slack_ineq, initial=0.0)),
        float(np.max(np.abs(res_eq), initial=0.0)),
        float(np.max(lo, initial=0.0)),
        float(np.max(hi, initial=0.0)),
        0.0,
    )

    dual = max(
        float(np.max(-mu, initial=0.0)),
        float(np.max(-pl, initial=0.0)),
        float(np.max(-pu, initial=0.0)),
        0.0,
    )

    comp_terms = [np.abs(mu * slack_ineq)] if mu.size else []
    finite_lo = np.isfinite(problem.lb)
    finite_hi = np.isfinite(problem.ub)
    comp_terms.append(np.abs(pl[finite_lo] * (z - problem.lb)[finite_lo]))
    comp_terms.append(np.abs(pu[finite_hi] * (problem.ub - z)[finite_hi]))
    comp = max((float(np.max(t, initial=0.0)) for t in comp_terms), default=0.0)

    grad = problem.gradient_at(z)
    stat_vec = grad - pl + pu
    if mu.size:
        stat_vec = stat_vec + problem.G.T @ mu
    if nu.size:
        stat_vec = stat_vec + problem.A_eq.T @ nu
    stationarity = float(np.max(np.abs(stat_vec), initial=0.0))

    return KktResiduals(primal, dual, comp, stationarity)


def _certify(problem: LpProblem, sol: LpSolution, tol: float) -> LpSolution:
    sol.kkt_residuals = check_kkt(problem, sol)
    if not sol.kkt_residuals.within(tol):
        sol.status = SolveStatus.NUMERICAL_FAILURE
        sol.message = f"KKT residuals exceed tol={tol}: {sol.kkt_residuals}"
    return sol


_SCIPY_STATUS = {
    0: SolveStatus.SOLVED,
    2: SolveStatus.INFEASIBLE,
    3: SolveStatus.UNBOUNDED,
}


def _solve_linear(problem: LpProblem, tol: float) -> LpSolution:
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
              for lo, hi in zip(problem.lb, problem.ub)]
    res = linprog(
        problem.c,
        A_ub=problem.G if problem.h.size else None,
        b_ub=problem.h if problem.h.size else None,
        A_eq=problem.A_eq if problem.b_eq.size else None,
        b_eq=problem.b_eq if problem.b_eq.size else None,
        bounds=bounds,
        method="highs-ds",
        options={
            "primal_feasibility_tolerance": _BACKEND_FEAS_TOL,
            "dual_feasibility_tolerance": _BACKEND_FEAS_TOL,
        },
    )
    status = _SCIPY_STATUS.get(res.status, SolveStatus.NUMERICAL_FAILURE)
    if status is not SolveStatus.SOLVED:
        return LpSolution(status=status, message=res.message)

    sol = LpSolution(
        status=SolveStatus.SOLVED,
        z=np.asarray(res.x, dtype=float),
        objective_value=float(res.fun),
        duals_ineq=-res.ineqlin.marginals if problem.h.size else np.zeros(0),
        duals_eq=-res.eqlin.marginals if problem.b_eq.size else np.zeros(0),
        duals_lower=np.asarray(res.lower.marginals, dtype=float),
        duals_upper=-np.asarray(res.upper.marginals, dtype=float),
        message=res.message,
    )
    return _certify(problem, sol, tol)


def _solve_quadratic(problem: LpProblem, tol: float) -> LpSolution:
    from cvxopt import matrix, solvers

    Q = 0.5 * (problem.Q + problem.Q.T)
    eigmin = float(np.min(np.linalg.eigvalsh(Q))) if Q.size else 0.0
    if eigmin < -1e-8:
        raise ValueError(f"quadratic term is not positive semidefinite (min eig {eigmin:g})")

    n = problem.n_vars
    # cvxopt has no native bounds: fold the finite ones into the G block.
    rows = [problem.G]
    rhs = [problem.h]
    lo_idx = np.flatnonzero(np.isfinite(problem.lb))
    hi_idx = np.flatnonzero(np.isfinite(problem.ub))
    eye = np.eye(n)
    rows.append(-eye[lo_idx])
    rhs.append(-problem.lb[lo_idx])
    rows.append(eye[hi_idx])
    rhs.append(problem.ub[hi_idx])
    Gfull = np.vstack(rows)
    hfull = np.concatenate(rhs)

    kwargs = {}
    if problem.b_eq.size:
        kwargs["A"] = matrix(problem.A_eq)
        kwargs["b"] = matrix(problem.b_eq)

    opts = {"show_progress": False, "abstol": 1e-10, "reltol": 1e-10,
            "feastol": 1e-10, "maxiters": 200}
    try:
        raw = solvers.qp(matrix(Q), matrix(problem.c), matrix(Gfull),
                         matrix(hfull), options=opts, **kwargs)
    except (ValueError, ArithmeticError, ZeroDivisionError) as exc:
        return LpSolution(status=SolveStatus.NUMERICAL_FAILURE, message=str(exc))

    if raw["status"] == "primal infeasible":
        return LpSolution(status=SolveStatus.INFEASIBLE, message=raw["status"])
    if raw["status"] == "dual infeasible":
        return LpSolution(status=SolveStatus.UNBOUNDED, message=raw["status"])
    if raw["status"] != "optimal":
        return LpSolution(status=SolveStatus.NUMERICAL_FAILURE, message=raw["status"])

    z = np.asarray(raw["x"]).ravel()
    m = problem.h.size
    dual_all = np.asarray(raw["z"]).ravel()
    pl = np.zeros(n)
    pu = np.zeros(n)
    pl[lo_idx] = dual_all[m:m + lo_idx.size]
    pu[hi_idx] = dual_all[m + lo_idx.size:]
    sol = LpSolution(
        status=SolveStatus.SOLVED,
        z=z,
        objective_value=problem.objective_at(z),
        duals_ineq=dual_all[:m],
        duals_eq=np.asarray(raw["y"]).ravel() if problem.b_eq.size else np.zeros(0),
        duals_lower=pl,
        duals_upper=pu,
    )
    return _certify(problem, sol, tol)


def solve(problem: LpProblem, tol: float = DEFAULT_TOL) -> LpSolution:
    """Solve an LP/QP and return primal point, duals and KKT residuals.

    Infeasible/unbounded outcomes come back as statuses, not exceptions.
    A nominally optimal answer whose recomputed KKT residuals exceed ``tol``
    is downgraded to ``NUMERICAL_FAILURE``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if problem.is_quadratic:
        return _solve_quadratic(problem, tol)
    return _solve_linear(problem, tol)


def _highs_core():
    """HiGHS bindings: the standalone package if installed, else the copy
    bundled inside SciPy. Returns None when neither import works."""
    try:
        from highspy import _core  # type: ignore
        return _core
    except ImportError:
        pass
    try:
        from scipy.optimize._highspy import _core  # type: ignore
        return _core
    except ImportError:
        return None


class WarmLp:
    """One LP model solved many times with a changing inequality RHS.

    The model is built once in HiGHS and re-solved from the previous basis
    after each RHS update, which is an order of magnitude faster than
    one-shot solves for the slowly drifting subproblem sequences produced by
    subgradient iterations. Each hot solution is certified with
    :func:`check_kkt`; if the backend is missing, reports a non-optimal
    model, or certification fails, the call transparently falls back to
    :func:`solve` on the updated problem.
    """

    def __init__(self, problem: LpProblem, mutable_rows=None, tol: float = DEFAULT_TOL):
        if problem.is_quadratic:
            raise ValueError("WarmLp only supports linear objectives")
        # Own a private copy: solve() mutates h in place between calls.
        self.problem = LpProblem(
            c=problem.c.copy(), G=problem.G.copy(), h=problem.h.copy(),
            A_eq=problem.A_eq.copy(), b_eq=problem.b_eq.copy(),
            lb=problem.lb.copy(), ub=problem.ub.copy(),
        )
        self.tol = tol
        m = problem.h.size
        self.mutable_rows = (np.arange(m) if mutable_rows is None
                             else np.asarray(mutable_rows, dtype=int))
        self._h = None
        self._core = _highs_core()
        self._solver = self._build() if self._core is not None else None
        self.fallbacks = 0

    def _build(self):
        import scipy.sparse as sp

        core = self._core
        p = self.problem
        n, m_in, m_eq = p.n_vars, p.h.size, p.b_eq.size
        inf = core.kHighsInf
        lp = core.HighsLp()
        lp.num_col_ = n
        lp.num_row_ = m_in + m_eq
        lp.col_cost_ = p.c.copy()
        lp.col_lower_ = np.where(np.isfinite(p.lb), p.lb, -inf)
        lp.col_upper_ = np.where(np.isfinite(p.ub), p.ub, inf)
        lp.row_lower_ = np.concatenate([np.full(m_in, -inf), p.b_eq])
        lp.row_upper_ = np.concatenate([p.h, p.b_eq])
        csr = sp.csr_matrix(np.vstack([p.G, p.A_eq]) if m_eq else p.G)
        lp.a_matrix_.format_ = core.MatrixFormat.kRowwise
        lp.a_matrix_.start_ = csr.indptr
        lp.a_matrix_.index_ = csr.indices
        lp.a_matrix_.value_ = csr.data

        solver = core._Highs()
        solver.setOptionValue("output_flag", False)
        solver.setOptionValue("presolve", "off")
        solver.setOptionValue("solver", "simplex")
        solver.setOptionValue("simplex_strategy", 1)  # dual simplex
        solver.setOptionValue("threads", 1)
        solver.setOptionValue("primal_feasibility_tolerance", _BACKEND_FEAS_TOL)
        solver.setOptionValue("dual_feasibility_tolerance", _BACKEND_FEAS_TOL)
        if solver.passModel(lp) != core.HighsStatus.kOk:
            return None
        return solver

    def solve(self, h_values: np.ndarray) -> LpSolution:
        """Re-solve with ``h[mutable_rows] = h_values``."""
        h_values = np.asarray(h_values, dtype=float)
        self.problem.h[self.mutable_rows] = h_values
        if self._solver is not None:
            sol = self._hot_solve(h_values)
            if sol is not None:
                return sol
            self.fallbacks += 1
        return solve(self.problem, self.tol)

    def _hot_solve(self, h_values) -> LpSolution | None:
        core = self._core
        solver = self._solver
        inf = core.kHighsInf
        for r, v in zip(self.mutable_rows, h_values):
            solver.changeRowBounds(int(r), -inf, v)
        solver.run()
        if solver.getModelStatus() != core.HighsModelStatus.kOptimal:
            return None
        raw = solver.getSolution()
        z = np.asarray(raw.col_value, dtype=float)
        row_dual = np.asarray(raw.row_dual, dtype=float)
        col_dual = np.asarray(raw.col_dual, dtype=float)
        m_in = self.problem.h.size
        sol = LpSolution(
            status=SolveStatus.SOLVED,
            z=z,
            objective_value=self.problem.objective_at(z),
            duals_ineq=-row_dual[:m_in],
            duals_eq=-row_dual[m_in:],
            duals_lower=np.maximum(col_dual, 0.0),
            duals_upper=np.maximum(-col_dual, 0.0),
        )
        sol.kkt_residuals = check_kkt(self.problem, sol)
        if not sol.kkt_residuals.within(self.tol):
            return None
        return sol
