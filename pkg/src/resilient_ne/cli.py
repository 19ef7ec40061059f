"""Command-line entry point: ``resilient-ne {run,check-graph,step-size,oracle,analyze}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .engine import ExitStatus, run, write_beliefs_csv, write_metrics_csv, write_summary
from .errors import (
    AssumptionViolation,
    NotConverged,
    NotStronglyMonotone,
    ResilientNEError,
    ScenarioError,
    SingularGame,
    TooLarge,
    UnsupportedGame,
)
from .game import estimate_constants, pseudo_gradient, solve_ne_oracle
from .graphs import check_assumptions
from .scenario import apply_overrides, parse_scenario, read_document

LOG_ENV = "RESILIENT_NE_LOG_LEVEL"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("resilient_ne")


def _load(args):
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"run.seed={args.seed}")
    return parse_scenario(apply_overrides(read_document(args.scenario), overrides))


def cmd_run(args) -> int:
    config = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = run(config, strict=args.strict)
    except AssumptionViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    write_metrics_csv(out / "metrics.csv", result.metrics, result.final.X, config.game.owner)
    write_beliefs_csv(out / "beliefs.csv", result.final.X)
    extra = {"scenario": config.name, "seed": config.seed}
    write_summary(out / "summary.json", result, extra)
    if config.record_weights and result.weights:
        np.savez_compressed(
            out / "weights.npz", rows=np.array(result.weights), estimates=np.array(result.estimates),
            owner=config.game.owner, eta=config.effective_eta,
            x_star=result.x_star if result.x_star is not None else np.full(config.game.n, np.nan))
    summary = result.summary()
    for key, value in summary.items():
        print(f"{key}: {value}")
    return EXIT_FAIL if result.exit is ExitStatus.ERROR else EXIT_OK


def cmd_check_graph(args) -> int:
    config = _load(args)
    mode = "sampled" if args.sampled else args.mode
    kwargs = {"mode": mode}
    try:
        if mode == "sampled":
            report = _sampled_report(config, args.sampled)
        else:
            report = check_assumptions(config.gc, config.go, sorted(config.active_adversaries),
                                       config.D, **kwargs)
    except TooLarge as exc:
        print(f"error: {exc}\nhint: use the default closure mode, or --sampled K for a "
              f"randomized search", file=sys.stderr)
        return EXIT_USAGE
    print(f"scenario: {config.name or args.scenario}")
    print(f"D = {config.D}, adversaries = {sorted(config.active_adversaries)}, mode = {mode}")
    for name, ok, detail in report.clauses:
        print(f"{name}: {'holds' if ok else 'FAILS'}")
        for key, value in detail.items():
            if value is not None:
                print(f"  {key}: {value}")
    print("all assumptions hold" if report.holds else "assumptions violated")
    return EXIT_OK if report.holds else EXIT_FAIL


def _sampled_report(config, trials):
    from .graphs import RobustnessReport, is_information_robust

    base = check_assumptions(config.gc, config.go, sorted(config.active_adversaries), config.D,
                             mode="closure")
    clauses = [c for c in base.clauses if c[0] != "information_robust"]
    r = 2 * config.D + 1
    failing = {}
    for m in range(config.gc.num_nodes):
        rep = is_information_robust(config.gc, config.go, m, r, mode="sampled", trials=trials,
                                    seed=config.seed)
        if not rep.holds:
            failing[m] = sorted(rep.witness)
    clauses.append(("information_robust", not failing, {"r": r, "violating_nodes": failing or None}))
    holds = all(ok for _, ok, _ in clauses)
    return RobustnessReport("Assumptions", holds, None if holds else failing, clauses)


def cmd_step_size(args) -> int:
    config = _load(args)
    try:
        mu, L = estimate_constants(config.game)
    except NotStronglyMonotone as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except UnsupportedGame as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    N, eta = config.game.num_agents, config.effective_eta
    C, pbar = analysis.compute_pbar(N, eta)
    amax = analysis.max_feasible_alpha(mu, L, pbar)
    _, pd = analysis.step_size_test(config.alpha, mu, L, pbar)
    print(f"N     = {N}")
    print(f"eta   = {eta:.6g}")
    print(f"mu    = {mu:.6g}")
    print(f"L     = {L:.6g}")
    print(f"C     = {C!r}")
    print(f"1 - C = {(eta / 2) ** (N - 1):.6g}")
    print(f"pbar  = {pbar:.6g}")
    print(f"max feasible alpha = {amax:.6g}")
    if pd:
        print(f"alpha = {config.alpha:.6g}: certified (M positive definite)")
    else:
        print(f"alpha = {config.alpha:.6g}: outside the conservative certificate. The bound "
              f"assumes worst-case switching of the weight matrices and is far from tight, so "
              f"larger steps often converge in practice.")
    return EXIT_OK


def cmd_oracle(args) -> int:
    config = _load(args)
    try:
        x = solve_ne_oracle(config.game)
    except (SingularGame, UnsupportedGame) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    residual = float(np.linalg.norm(pseudo_gradient(config.game, x)))
    with np.printoptions(precision=12, suppress=False, threshold=sys.maxsize):
        for i in range(config.game.num_agents):
            print(f"x[{i}] = {x[config.game.block(i)]}")
    print(f"residual = {residual:.3e}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    path = Path(args.run)
    if path.is_dir():
        path = path / "weights.npz"
    if not path.is_file():
        print(f"error: no recorded weights at {path} (run with run.record_weights=true)",
              file=sys.stderr)
        return EXIT_USAGE
    with np.load(path) as data:
        rows, owner, eta = data["rows"], data["owner"], float(data["eta"])
        estimates, x_star = data["estimates"], data["x_star"]
    N = rows.shape[1]
    proj = analysis.Projection(owner, N)
    ws = [analysis.assemble_wbar(r) for r in rows[: args.window]]
    C, pbar = analysis.compute_pbar(N, eta)
    sections = [("setup", {"agents": N, "components": len(owner), "rounds": len(ws),
                           "eta": eta, "C": C, "pbar": pbar})]

    props = [analysis.check_wbar_properties(W, proj) for W in ws]
    sections.append(("weight matrices", {k: max(p[k] for p in props) if k != "min_entry"
                                         else min(p[k] for p in props) for k in props[0]}))

    norms = analysis.contraction_norms(ws, proj, N, r_max=args.r_max)
    table = []
    for r in range(1, args.r_max + 1):
        vals = norms[r - 1][np.isfinite(norms[r - 1])]
        if vals.size:
            table.append((r, float(vals.max()), 2 * C**r, bool(vals.max() <= 2 * C**r)))
    sections.append(("contraction", (("r", "max_norm", "bound_2C^r", "within"), table)))

    try:
        seq = analysis.finite_horizon_P(ws, proj, tol=args.tol)
    except NotConverged as exc:
        sections.append(("lyapunov matrices", {"status": f"not converged: {exc}"}))
    else:
        res = analysis.recursion_residuals(ws, seq.P, proj)
        lam = [float(np.linalg.eigvalsh(P)[-1]) for P in seq.P]
        sections.append(("lyapunov matrices", {
            "max_recursion_residual": float(res.max()),
            "max_lambda_max": max(lam),
            "within_pbar": bool(max(lam) <= pbar),
            "max_terms": max(seq.horizon),
        }))
        if np.all(np.isfinite(x_star)):
            V = [analysis.lyapunov_value(estimates[k].reshape(-1), seq.P[k + 1], x_star, proj)
                 for k in range(len(ws))]
            sections.append(("lyapunov values", {"first": V[0], "last": V[-1],
                                                 "monotone": bool(np.all(np.diff(V) < 0))}))
    print(analysis.format_report(sections))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resilient-ne",
                                     description="Resilient distributed Nash equilibrium seeking")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("--scenario", required=True,
                       help="scenario file path or builtin name")
        p.add_argument("--set", action="append", metavar="K=V",
                       help="override a field, e.g. --set run.alpha=0.05 (repeatable)")
        p.add_argument("--seed", type=int, help="override run.seed")

    p = sub.add_parser("run", help="simulate a scenario")
    scenario_args(p)
    p.add_argument("--out", default="out", help="output directory")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true",
                      help="refuse to run when the graph assumptions fail")
    mode.add_argument("--permissive", dest="strict", action="store_false",
                      help="warn about failed assumptions and run anyway (default)")
    p.set_defaults(func=cmd_run, strict=False)

    p = sub.add_parser("check-graph", help="verify the graph assumptions")
    scenario_args(p)
    p.add_argument("--mode", choices=("closure", "exhaustive"), default="closure",
                   help="exact search strategy")
    p.add_argument("--sampled", type=int, metavar="K",
                   help="randomized check with K trials per node")
    p.set_defaults(func=cmd_check_graph)

    p = sub.add_parser("step-size", help="print certified step-size constants")
    scenario_args(p)
    p.set_defaults(func=cmd_step_size)

    p = sub.add_parser("oracle", help="solve for the Nash equilibrium centrally")
    scenario_args(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("analyze", help="check convergence certificates on a recorded run")
    p.add_argument("--run", required=True, help="output directory of a recorded run")
    p.add_argument("--window", type=int, default=None, help="analyze only the first rounds")
    p.add_argument("--r-max", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResilientNEError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
