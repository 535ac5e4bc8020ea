"""Command-line interface: ``radner {solve,verify,figures,sweep}``.

Exit codes: 0 success, 1 solve error, 2 input error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings

import numpy as np

from .equilibrium import evaluation_grid, solve
from .errors import RadnerError, SpecError
from .scenario import ScenarioError, load_scenario
from .statics import kink_points, lambda_sweep
from .verification import inject_tau_fault, oracle_checks, run_all_checks, VerificationReport

EXIT_OK, EXIT_SOLVE, EXIT_INPUT, EXIT_VERIFY = 0, 1, 2, 3
FAULT_SHIFT = 0.05

log = logging.getLogger("radner")


class InputError(Exception):
    pass


def fmt(x: float) -> str:
    # adding 0.0 folds -0.0 into 0.0
    return "%.17g" % (float(x) + 0.0)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_all(outdir: str, files: dict) -> None:
    """Write every file only after all contents were computed."""
    os.makedirs(outdir, exist_ok=True)
    for name, text in files.items():
        write_atomic(os.path.join(outdir, name), text)


def _json_float(x):
    x = float(x)
    return None if math.isnan(x) else x


def solution_summary(sol) -> dict:
    o = sol.ordering
    ranks = []
    for p, agent in enumerate(o.perm):
        ranks.append(
            {
                "rank": p + 1,
                "agent": agent + 1,
                "target": sol.spec.agents[agent].target,
                "a": _json_float(o.a_rank[p]),
                "A": _json_float(o.A[p]),
                "tau": _json_float(o.tau[p]),
                "c": _json_float(o.c[p]),
            }
        )
    return {
        "lambda": sol.spec.lam,
        "permutation": [agent + 1 for agent in o.perm],
        "s0": sol.s0,
        "breakpoints": [float(b) for b in sol.breakpoints],
        "ranks": ranks,
    }


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_solve(args) -> int:
    scen = load_scenario(args.scenario)
    sol = solve(scen.spec, scen.model)
    text = _dump(solution_summary(sol))
    if args.output:
        write_atomic(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    scen = load_scenario(args.scenario)
    grid = scen.grid_size(args.grid)
    sol = solve(scen.spec, scen.model)
    if args.inject_fault:
        sol = inject_tau_fault(sol, sol.n_agents - 1, FAULT_SHIFT)
    report = run_all_checks(sol, grid)
    if args.with_oracle:
        report = VerificationReport(report.checks + tuple(oracle_checks(sol, args.oracle_n)))
    sys.stdout.write(report.to_json() + "\n")
    return EXIT_OK if report.passed else EXIT_VERIFY


def _parse_agents(text, n):
    if text is None:
        return list(range(1, n + 1))
    try:
        ids = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"--agents expects comma-separated integers, got {text!r}") from None
    bad = [i for i in ids if not 1 <= i <= n]
    if bad or not ids:
        raise InputError(f"--agents must list ids in 1..{n}")
    return ids


def figure_files(scen, sol, grid_n, agents, lam2, lam_max, steps) -> dict:
    spec, model = scen.spec, scen.model
    t = evaluation_grid(sol, grid_n)
    files = {}

    rows = []
    for i, ag in enumerate(spec.agents):
        rows.append((str(i + 1), ag.target, float(sol.ordering.tau[sol.ordering.rank_of(i) - 1])))
    files["fig1_stop_times.csv"] = csv_text(("agent", "target", "tau"), rows)

    mu = sol.drift(t)
    files["fig2_drift.csv"] = csv_text(("t", "mu"), zip(t, mu))

    cols = [sol.agent_strategy(i - 1, t) for i in agents]
    files["fig3_strategies.csv"] = csv_text(["t"] + [f"agent_{i}" for i in agents], zip(t, *cols))

    sol2 = solve(spec.with_lambda(lam2), model)
    t4 = np.union1d(t, sol2.breakpoints)
    files["fig4_drift_pair.csv"] = csv_text(("t", "mu_lambda1", "mu_lambda2"), zip(t4, sol.drift(t4), sol2.drift(t4)))

    lams = np.linspace(lam_max / steps, lam_max, steps)
    sweep = lambda_sweep(spec, model, lams)
    files["fig5_s0_vs_lambda.csv"] = csv_text(("lambda", "s0"), zip(sweep.lambdas, sweep.s0))
    return files


def cmd_figures(args) -> int:
    scen = load_scenario(args.scenario)
    if args.steps < 2 or not (args.lambda_max is None or args.lambda_max > 0):
        raise InputError("need --steps >= 2 and --lambda-max > 0")
    sol = solve(scen.spec, scen.model)
    agents = _parse_agents(args.agents, scen.spec.n_agents)
    lam2 = args.lambda2 if args.lambda2 is not None else scen.spec.lam / 2.0
    if lam2 <= 0:
        raise InputError("--lambda2 must be positive")
    lam_max = args.lambda_max if args.lambda_max is not None else 10.0 * scen.spec.lam
    files = figure_files(scen, sol, scen.grid_size(args.grid), agents, lam2, lam_max, args.steps)
    write_all(args.outdir, files)
    return EXIT_OK


def cmd_sweep(args) -> int:
    scen = load_scenario(args.scenario)
    lo, hi, steps = args.lambda_min, args.lambda_max, args.steps
    if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo < hi) or steps < 3:
        raise InputError("need 0 < --lambda-min < --lambda-max and --steps >= 3")
    sweep = lambda_sweep(scen.spec, scen.model, np.linspace(lo, hi, steps))
    kinks = kink_points(sweep)
    n = scen.spec.n_agents
    header = ["lambda", "s0", "active"] + [f"tau_{j}" for j in range(1, n + 1)] + [f"c_{j}" for j in range(1, n + 1)]
    rows = []
    for q in range(sweep.lambdas.size):
        cs = ["nan" if math.isnan(v) else fmt(v) for v in sweep.c[q]]
        rows.append([sweep.lambdas[q], sweep.s0[q], str(int(sweep.active_counts[q]))] + list(sweep.tau[q]) + cs)
    files = {
        "sweep.csv": csv_text(header, rows),
        "kinks.json": _dump({"permutation": [a + 1 for a in sweep.perm], "kinks": kinks}),
    }
    write_all(args.outdir, files)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radner", description="Equilibrium with transaction costs and trading targets.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a scenario and print the summary JSON")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", help="write the summary here instead of stdout")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run the verification suite")
    p.add_argument("scenario")
    p.add_argument("--grid", type=int)
    p.add_argument("--oracle-n", type=int, default=400)
    p.add_argument("--with-oracle", action="store_true")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("figures", help="write the figure CSVs")
    p.add_argument("scenario")
    p.add_argument("outdir")
    p.add_argument("--grid", type=int)
    p.add_argument("--agents", help="comma-separated 1-based agent ids for fig3 (default: all)")
    p.add_argument("--lambda2", type=float, help="second lambda for fig4 (default: half the scenario's)")
    p.add_argument("--lambda-max", type=float, help="upper end of the fig5 lambda grid (default: 10x lambda)")
    p.add_argument("--steps", type=int, default=200)
    p.set_defaults(func=cmd_figures)

    p = sub.add_parser("sweep", help="lambda sweep with kink detection")
    p.add_argument("scenario")
    p.add_argument("outdir")
    p.add_argument("--lambda-min", type=float, required=True)
    p.add_argument("--lambda-max", type=float, required=True)
    p.add_argument("--steps", type=int, default=200)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if getattr(args, "grid", None) is not None and args.grid < 2:
        print("error: --grid must be at least 2", file=sys.stderr)
        return EXIT_INPUT
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, *a, **k: log.warning("%s", msg)
            return args.func(args)
    except ScenarioError as exc:
        print(json.dumps({"error": str(exc), "pointer": exc.pointer}), file=sys.stderr)
        return EXIT_INPUT
    except (InputError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RadnerError as exc:
        print(f"solve error: {exc}", file=sys.stderr)
        return EXIT_SOLVE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
