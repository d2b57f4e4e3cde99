"""Distributed min-max optimization over a network via dual decomposition.

A fleet of agents cooperatively minimizes the peak (over a horizon) of the
sum of their per-slot costs, each agent holding private constraints. Agents
alternate a local epigraph solve with an edge-multiplier update against
neighbor disagreement; the sum of the local peak bounds converges to the
centralized optimum and every limit point of the local iterates is feasible
and optimal.
"""

from .graph import Graph, NotConnectedAfterRetries, complete_graph, erdos_renyi
from .lp import (DEFAULT_TOL, KktResiduals, LpProblem, LpSolution, SolveStatus,
                 WarmLp, check_kkt, solve)
from .model import (AffineCost, AgentSpec, MinMaxProblem, QuadraticCost,
                    ScalarCost, ValidationReport, eval_cost, tiny_problem,
                    validate)
from .oracle import (OracleResult, load_cache, problem_fingerprint, save_cache,
                     solve_centralized, strong_duality_check)
from .protocol import (AgentState, Constant, Harmonic, PowerLaw,
                       SeededRandomInit, StepSchedule, ZeroInit, gamma,
                       init_agent, round_phase1, round_phase2,
                       validate_schedule)
from .sim import (FinalReport, InsufficientData, InvariantAudit, RunConfig,
                  RunTrace, SolverFailure, rate_fit, relative_error, run)
from .subproblem import (EpigraphSolver, LambdaExchange, LocalInfeasible,
                         LocalPrimalDual, NumericalFailure, eval_eta_i,
                         eval_qi, lambda_delta, solve_local)
from .tcl import (ScenarioInfeasible, TclAgentMatrices, TclParams,
                  build_matrices, build_scenario, default_params,
                  discrete_step, simulate, to_agent_spec,
                  trajectory_from_matrices)

__version__ = "0.1.0"
