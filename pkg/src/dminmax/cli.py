"""Batch entry point: config in, trace/report/resolved-config out.

One JSON config document describes the problem source, the communication
graph, the run parameters and the oracle policy; the only flags are
overrides (`--iterations`, `--seed`, `--output-dir`, `--quiet`). Outputs in
the output directory:

* ``trace.csv``          recorded metric rows
* ``report.json``        final report with the invariant audit
* ``resolved_config.json``  the config with every default expanded
* ``oracle.json``        centralized reference (when enabled)

Exit codes: 0 success, 2 config error, 3 infeasible problem, 4 solver
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import graph as graph_mod
from . import model, oracle, sim, tcl
from .protocol import lambda_init_from_dict, schedule_from_dict, schedule_to_dict

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4

_VIOLATION_SLACK = 1e-8
_PEAK_SLACK = 1e-7


class ConfigError(ValueError):
    pass


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def build_problem(cfg: dict) -> tuple[model.MinMaxProblem, dict]:
    kind = cfg.get("kind")
    if kind == "builtin-tiny":
        return model.tiny_problem(), {"kind": "builtin-tiny"}
    if kind == "problem-file":
        path = cfg.get("path")
        _require(isinstance(path, str), "problem-file source needs a 'path'")
        _require(os.path.exists(path), f"problem file not found: {path}")
        return model.MinMaxProblem.from_json(path), {"kind": "problem-file", "path": path}
    if kind == "tcl-scenario":
        n_agents = int(cfg.get("n_agents", 20))
        horizon = int(cfg.get("horizon", 60))
        seed = int(cfg.get("seed", 0))
        overrides = dict(cfg.get("params", {}))
        temp_out_value = float(overrides.pop("temp_out", 10.0))
        try:
            template = tcl.default_params(horizon, temp_out_value=temp_out_value,
                                          **overrides)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad tcl-scenario params: {exc}") from exc
        problem = tcl.build_scenario(n_agents, horizon, seed, template)
        resolved = {
            "kind": "tcl-scenario", "n_agents": n_agents, "horizon": horizon,
            "seed": seed,
            "params": {
                "alpha": template.alpha, "gain": template.gain, "dt": template.dt,
                "temp_init": template.temp_init, "temp_min": template.temp_min,
                "temp_max": template.temp_max, "temp_out": temp_out_value,
            },
        }
        return problem, resolved
    raise ConfigError(f"unknown problem kind {kind!r}")


def build_graph(cfg: dict, n_agents: int) -> tuple[graph_mod.Graph, dict]:
    kind = cfg.get("kind")
    if kind == "complete":
        return graph_mod.complete_graph(n_agents), {"kind": "complete"}
    if kind == "erdos-renyi":
        p = float(cfg.get("p", 0.2))
        seed = int(cfg.get("seed", 0))
        max_tries = int(cfg.get("max_tries", 1000))
        g = graph_mod.erdos_renyi(n_agents, p, seed=seed, max_tries=max_tries)
        return g, {"kind": "erdos-renyi", "p": p, "seed": seed, "max_tries": max_tries}
    if kind == "edge-list":
        path = cfg.get("path")
        _require(isinstance(path, str), "edge-list source needs a 'path'")
        _require(os.path.exists(path), f"edge-list file not found: {path}")
        with open(path) as fh:
            g = graph_mod.Graph.from_edge_list(fh.read(), n=n_agents)
        return g, {"kind": "edge-list", "path": path}
    raise ConfigError(f"unknown graph kind {kind!r}")


def build_run_config(cfg: dict, iterations_override=None, seed_override=None
                     ) -> tuple[sim.RunConfig, dict]:
    seed = int(cfg.get("seed", 0)) if seed_override is None else int(seed_override)
    lam_cfg = dict(cfg.get("lambda_init", {"kind": "zero"}))
    if lam_cfg.get("kind") == "random":
        lam_cfg.setdefault("seed", seed)
    try:
        run_cfg = sim.RunConfig(
            iterations=(int(cfg.get("iterations", 1000)) if iterations_override is None
                        else int(iterations_override)),
            schedule=schedule_from_dict(cfg.get("schedule", {"kind": "power-law"})),
            seed=seed,
            tol=float(cfg.get("tol", 1e-9)),
            record_every=int(cfg.get("record_every", 1)),
            lambda_init=lambda_init_from_dict(lam_cfg),
            target=float(cfg.get("target", 1e-3)),
            early_stop=bool(cfg.get("early_stop", False)),
            patience=int(cfg.get("patience", 20)),
            record_agent_rho=bool(cfg.get("record_agent_rho", False)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad run config: {exc}") from exc
    resolved = run_cfg.to_json_dict()
    return run_cfg, resolved


def replay_check(trace_path, report_path) -> bool:
    """Re-verify the recorded invariants from the files alone.

    Checks every row for nonpositive coupling violation (within slack),
    peak below sum_rho, peak above the oracle value, and cost_error
    consistency. Prints the first offending row to stderr and returns
    False; malformed files raise ValueError.
    """
    trace = sim.RunTrace.from_csv(trace_path)
    with open(report_path) as fh:
        report = json.load(fh)
    if not isinstance(report, dict) or "sum_rho" not in report:
        raise ValueError(f"malformed report file: {report_path}")
    oracle_value = report.get("oracle_value")

    for k in range(len(trace)):
        row = trace.t[k]
        if trace.max_violation[k] > _VIOLATION_SLACK:
            print(f"replay: row {k} (t={row}): coupling violation "
                  f"{trace.max_violation[k]:.3e}", file=sys.stderr)
            return False
        if trace.peak[k] > trace.sum_rho[k] + _VIOLATION_SLACK:
            print(f"replay: row {k} (t={row}): P_t {trace.peak[k]!r} exceeds "
                  f"sum_rho {trace.sum_rho[k]!r}", file=sys.stderr)
            return False
        if oracle_value is not None:
            if trace.peak[k] < oracle_value - _PEAK_SLACK:
                print(f"replay: row {k} (t={row}): P_t below oracle value",
                      file=sys.stderr)
                return False
            expected = abs(trace.sum_rho[k] - oracle_value)
            if abs(trace.cost_error[k] - expected) > 1e-9 * max(1.0, abs(oracle_value)):
                print(f"replay: row {k} (t={row}): cost_error inconsistent",
                      file=sys.stderr)
                return False
    return True


def _cmd_run(args) -> int:
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        print(f"cannot read config {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"config {args.config} is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        _require(isinstance(cfg, dict), "config must be a JSON object")
        _require("problem" in cfg, "config needs a 'problem' section")
        _require("graph" in cfg, "config needs a 'graph' section")
        problem, resolved_problem = build_problem(cfg["problem"])
        g, resolved_graph = build_graph(cfg["graph"], problem.n_agents)
        _require(g.n == problem.n_agents,
                 f"dimension mismatch: graph has {g.n} nodes, "
                 f"problem has {problem.n_agents} agents")
        run_cfg, resolved_run = build_run_config(
            cfg.get("run", {}), iterations_override=args.iterations,
            seed_override=args.seed)
        oracle_cfg = dict(cfg.get("oracle", {"enabled": True}))
        output_dir = args.output_dir or cfg.get("output_dir", "out")
    except (ConfigError, tcl.ScenarioInfeasible, ValueError) as exc:
        if isinstance(exc, tcl.ScenarioInfeasible):
            print(f"infeasible problem: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    report_v = model.validate(problem)
    if not report_v.ok:
        print(f"infeasible problem: {report_v.summary()}", file=sys.stderr)
        return EXIT_INFEASIBLE

    os.makedirs(output_dir, exist_ok=True)

    oracle_value = None
    oracle_result = None
    if oracle_cfg.get("enabled", True):
        cache_path = oracle_cfg.get("cache")
        if cache_path:
            oracle_result = oracle.load_cache(cache_path, problem)
        if oracle_result is None:
            try:
                oracle_result = oracle.solve_centralized(problem, run_cfg.tol)
            except Exception as exc:
                print(f"oracle solve failed: {exc}", file=sys.stderr)
                return EXIT_SOLVER
            if cache_path:
                oracle.save_cache(cache_path, problem, oracle_result)
        oracle_value = oracle_result.P_star
        with open(os.path.join(output_dir, "oracle.json"), "w") as fh:
            json.dump(oracle_result.to_json_dict(), fh, sort_keys=True)
        if not args.quiet:
            print(f"oracle peak: {oracle_value!r}")

    try:
        trace, final = sim.run(problem, g, run_cfg, oracle_value=oracle_value)
    except sim.SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    trace.to_csv(os.path.join(output_dir, "trace.csv"))
    with open(os.path.join(output_dir, "report.json"), "w") as fh:
        json.dump(final.to_json_dict(), fh, sort_keys=True, indent=1)
    resolved = {
        "problem": resolved_problem,
        "graph": resolved_graph,
        "run": resolved_run,
        "oracle": {"enabled": bool(oracle_cfg.get("enabled", True)),
                   "cache": oracle_cfg.get("cache")},
        "output_dir": output_dir,
    }
    with open(os.path.join(output_dir, "resolved_config.json"), "w") as fh:
        json.dump(resolved, fh, sort_keys=True, indent=1)

    if not args.quiet:
        print(f"ran {final.iterations_run} iterations; "
              f"sum_rho={final.sum_rho!r} peak={final.peak!r}"
              + (f" converged={final.converged}" if final.converged is not None else ""))
        print(f"outputs in {output_dir}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    try:
        ok = replay_check(args.trace, args.report)
    except (OSError, ValueError) as exc:
        print(f"replay error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("replay: ok" if ok else "replay: FAILED")
    return EXIT_OK if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dminmax",
        description="Distributed min-max optimization runs from a JSON config.")
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="build a problem, run the algorithm, write outputs")
    p_run.add_argument("--config", required=True, help="path to the JSON config")
    p_run.add_argument("--output-dir", default=None, help="override the output directory")
    p_run.add_argument("--iterations", type=int, default=None, help="override iteration count")
    p_run.add_argument("--seed", type=int, default=None, help="override the run seed")
    p_run.add_argument("--quiet", action="store_true")

    p_replay = sub.add_parser("replay", help="re-verify trace invariants from files")
    p_replay.add_argument("--trace", required=True)
    p_replay.add_argument("--report", required=True)

    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] not in ("run", "replay", "-h", "--help"):
        argv = ["run"] + argv
    args = parser.parse_args(argv)

    if args.command == "replay":
        return _cmd_replay(args)
    if args.command == "run":
        return _cmd_run(args)
    parser.print_help()
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
