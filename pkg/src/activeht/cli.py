"""Command-line front end: inspect environments, solve allocations, run trials
and experiment sweeps, and dump plot-ready diagnostics.

Exit codes are stable: 0 success, 1 runtime/I-O failure, 2 usage error
(unknown command or flag), 3 validation error (a flag value out of range or
a malformed environment document).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .engine import DEFAULT_B, POLICY_KINDS, PolicyConfig, run_trial
from .harness import (
    ALPHA_GRID,
    DELTA_GRID,
    ExperimentConfig,
    run_alpha_sweep,
    run_delta_sweep,
    run_diagnostic_trial,
    summary_to_csv,
)
from .model import ModelError, PRESET_NAMES, load_environment
from .oracle import OracleError, oracle_allocation

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3

# Library trials default to an effectively unbounded cap; the CLI uses a cap
# that keeps a full sweep finite even for policies that can stall forever
# (the greedy baseline deadlocks on the degenerate environment).
CLI_MAX_STEPS = 20_000


class UsageError(Exception):
    pass


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip() != "")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip() != "")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="activeht",
        description="Active multi-hypothesis testing: policies, oracle, experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_env(p):
        p.add_argument(
            "--env", required=True,
            help=f"environment preset ({', '.join(PRESET_NAMES)}) or JSON file path",
        )

    p_env = sub.add_parser("env", help="inspect an environment")
    add_env(p_env)

    p_solve = sub.add_parser("solve-oracle", help="solve the max-min allocation")
    add_env(p_solve)
    p_solve.add_argument("--h", type=int, required=True, help="candidate hypothesis index")
    p_solve.add_argument(
        "--opponents", type=_int_list, required=True,
        help="comma-separated opponent hypothesis indices",
    )

    p_trial = sub.add_parser("trial", help="run a single seeded trial")
    add_env(p_trial)
    p_trial.add_argument("--policy", required=True, choices=POLICY_KINDS)
    p_trial.add_argument("--delta", type=float, required=True, help="confidence level in (0,1)")
    p_trial.add_argument("--alpha", type=float, default=1.0, help="elimination aggressiveness in (0,1]")
    p_trial.add_argument("--true-h", type=int, default=0, help="index of the true hypothesis")
    p_trial.add_argument("--seed", type=int, default=0)
    p_trial.add_argument("--b", type=float, default=DEFAULT_B, help="threshold slope")
    p_trial.add_argument("--c", type=float, default=None, help="threshold offset (default log(K-1))")
    p_trial.add_argument("--max-steps", type=int, default=CLI_MAX_STEPS)

    p_exp1 = sub.add_parser("exp1", help="confidence sweep: all policies over a delta grid")
    add_env(p_exp1)
    p_exp1.add_argument("--deltas", type=_float_list, default=DELTA_GRID)
    p_exp1.add_argument("--policies", default=",".join(POLICY_KINDS),
                        help="comma-separated subset of " + ",".join(POLICY_KINDS))
    p_exp1.add_argument("--trials", type=int, default=1000)
    p_exp1.add_argument("--true-h", type=int, default=0)
    p_exp1.add_argument("--seed", type=int, default=0)
    p_exp1.add_argument("--workers", type=int, default=1)
    p_exp1.add_argument("--b", type=float, default=DEFAULT_B)
    p_exp1.add_argument("--c", type=float, default=None)
    p_exp1.add_argument("--max-steps", type=int, default=CLI_MAX_STEPS)
    p_exp1.add_argument("--out", required=True, help="output CSV path")

    p_exp2 = sub.add_parser("exp2", help="aggressiveness sweep at a fixed delta")
    add_env(p_exp2)
    p_exp2.add_argument("--delta", type=float, default=0.1)
    p_exp2.add_argument("--alphas", type=_float_list, default=ALPHA_GRID)
    p_exp2.add_argument("--trials", type=int, default=1000)
    p_exp2.add_argument("--true-h", type=int, default=0)
    p_exp2.add_argument("--seed", type=int, default=0)
    p_exp2.add_argument("--workers", type=int, default=1)
    p_exp2.add_argument("--b", type=float, default=DEFAULT_B)
    p_exp2.add_argument("--c", type=float, default=None)
    p_exp2.add_argument("--max-steps", type=int, default=CLI_MAX_STEPS)
    p_exp2.add_argument("--out", required=True, help="output CSV path")

    p_diag = sub.add_parser("diagnose", help="record one trial's internal dynamics")
    add_env(p_diag)
    p_diag.add_argument("--delta", type=float, default=0.1)
    p_diag.add_argument("--alpha", type=float, default=1.0)
    p_diag.add_argument("--true-h", type=int, default=0)
    p_diag.add_argument("--seed", type=int, default=0)
    p_diag.add_argument("--b", type=float, default=DEFAULT_B)
    p_diag.add_argument("--c", type=float, default=None)
    p_diag.add_argument("--max-steps", type=int, default=CLI_MAX_STEPS)
    p_diag.add_argument("--out", required=True, help="trace JSON path")
    p_diag.add_argument("--plot-dir", default=None,
                        help="also write the four plot-ready panel files here")

    return parser


def _validate_common(args) -> None:
    for name, lo_open, hi, hi_open in (("delta", 0.0, 1.0, True), ("alpha", 0.0, 1.0, False)):
        if hasattr(args, name):
            value = getattr(args, name)
            bad = not (lo_open < value < hi) if hi_open else not (lo_open < value <= hi)
            if bad:
                raise ValueError(f"--{name} must lie in (0, 1{')' if hi_open else ']'}: got {value}")
    if hasattr(args, "deltas") and any(not 0.0 < d < 1.0 for d in args.deltas):
        raise ValueError(f"--deltas must lie in (0, 1): {args.deltas}")
    if hasattr(args, "alphas") and any(not 0.0 < a <= 1.0 for a in args.alphas):
        raise ValueError(f"--alphas must lie in (0, 1]: {args.alphas}")
    for name in ("trials", "workers", "max_steps"):
        if hasattr(args, name) and getattr(args, name) < 1:
            raise ValueError(f"--{name.replace('_', '-')} must be at least 1")
    if hasattr(args, "b") and args.b is not None and args.b <= 0:
        raise ValueError(f"--b must be positive: got {args.b}")
    if hasattr(args, "true_h") and args.true_h < 0:
        raise ValueError(f"--true-h must be nonnegative: got {args.true_h}")


def _write_manifest(out_path: str, command: str, config: dict) -> None:
    manifest = {
        "tool": "activeht",
        "version": __version__,
        "command": command,
        "config": config,
    }
    Path(str(out_path) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _cmd_env(args) -> int:
    env = load_environment(args.env)
    doc = {
        "name": env.name,
        "num_hypotheses": env.num_hypotheses,
        "num_actions": env.num_actions,
        "sigma": env.sigma,
        "means": [list(row) for row in env.means],
        "indistinguishable_pairs": env.indistinguishable_pairs(),
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _cmd_solve_oracle(args) -> int:
    env = load_environment(args.env)
    sol = oracle_allocation(env, args.h, args.opponents)
    doc = {
        "environment": env.name,
        "h": args.h,
        "opponents": sorted(set(args.opponents)),
        "weights": [round(w, 12) for w in sol.allocation.weights],
        "rate": sol.rate,
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _cmd_trial(args) -> int:
    env = load_environment(args.env)
    cfg = PolicyConfig(kind=args.policy, delta=args.delta, alpha=args.alpha,
                       b=args.b, c=args.c, max_steps=args.max_steps)
    result = run_trial(env, args.true_h, cfg, args.seed)
    doc = {
        "environment": env.name,
        "policy": args.policy,
        "seed": args.seed,
        "tau": result.tau,
        "recommendation": result.recommendation,
        "correct": result.correct,
        "timed_out": result.timed_out,
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _experiment_config(args, *, deltas=None, alphas=None, policies=None) -> ExperimentConfig:
    return ExperimentConfig(
        environment=args.env,
        true_h=args.true_h,
        policies=policies if policies is not None else POLICY_KINDS,
        deltas=deltas if deltas is not None else DELTA_GRID,
        alphas=alphas if alphas is not None else ALPHA_GRID,
        trials=args.trials,
        base_seed=args.seed,
        workers=args.workers,
        out=args.out,
        b=args.b,
        c=args.c,
        max_steps=args.max_steps,
    )


def _cmd_exp1(args) -> int:
    policies = tuple(p for p in args.policies.split(",") if p)
    ecfg = _experiment_config(args, deltas=tuple(args.deltas), alphas=(1.0,), policies=policies)
    rows = run_delta_sweep(ecfg)
    _write_manifest(args.out, "exp1", _manifest_config(ecfg))
    print(summary_to_csv(rows), end="")
    return EXIT_OK


def _cmd_exp2(args) -> int:
    ecfg = _experiment_config(args, deltas=(args.delta,), alphas=tuple(args.alphas),
                              policies=("FullElim",))
    rows = run_alpha_sweep(ecfg)
    _write_manifest(args.out, "exp2", _manifest_config(ecfg))
    print(summary_to_csv(rows), end="")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    ecfg = ExperimentConfig(
        environment=args.env, true_h=args.true_h, policies=("FullElim",),
        deltas=(args.delta,), alphas=(args.alpha,), trials=1, base_seed=args.seed,
        out=args.out, b=args.b, c=args.c, max_steps=args.max_steps,
    )
    trace = run_diagnostic_trial(ecfg, args.seed)
    _write_manifest(args.out, "diagnose", {**_manifest_config(ecfg), "seed": args.seed})
    if args.plot_dir is not None:
        paths = emit_plot_data(trace, args.plot_dir)
        for p in paths:
            print(p)
    print(f"trace written to {args.out} ({len(trace.t)} rounds)")
    return EXIT_OK


def _manifest_config(ecfg: ExperimentConfig) -> dict:
    doc = asdict(ecfg)
    doc["environment"] = str(doc["environment"])
    return doc


def emit_plot_data(trace, out_dir) -> list[Path]:
    """Write the four plot-ready panel files for a recorded trace.

    active_set.csv has one row per elimination event; allocation.csv,
    evidence.csv and rates.csv have one row per round (rates.csv skips the
    final round, where the surviving-opponent set is empty).
    """
    if not trace.t:
        raise UsageError("trace is empty; nothing to plot")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    lines = ["t,champion,removed,active_size,active_members"]
    for step, champion, removed, survivors in zip(
        trace.t, trace.champion, trace.events, trace.active_set
    ):
        if removed:
            lines.append(
                f"{step},{champion},{';'.join(map(str, removed))},{len(survivors)},"
                f"{';'.join(map(str, survivors))}"
            )
    paths.append(_write_lines(out / "active_set.csv", lines))

    width = len(trace.alloc[0]) if trace.alloc else 0
    lines = ["t," + ",".join(f"w{a}" for a in range(width))]
    for step, alloc in zip(trace.t, trace.alloc):
        lines.append(f"{step}," + ",".join(f"{w:.6f}" for w in alloc))
    paths.append(_write_lines(out / "allocation.csv", lines))

    lines = ["t,min_Z,beta_elim"]
    for step, z, beta in zip(trace.t, trace.min_z, trace.beta_elim):
        lines.append(f"{step},{z:.6f},{beta:.6f}")
    paths.append(_write_lines(out / "evidence.csv", lines))

    lines = ["t,oracle_rate,empirical_rate"]
    for step, orate, erate in zip(trace.t, trace.oracle_rate, trace.empirical_rate):
        if orate is not None:
            lines.append(f"{step},{orate:.8f},{erate:.8f}")
    paths.append(_write_lines(out / "rates.csv", lines))
    return paths


def _write_lines(path: Path, lines) -> Path:
    path.write_text("\n".join(lines) + "\n")
    return path


_COMMANDS = {
    "env": _cmd_env,
    "solve-oracle": _cmd_solve_oracle,
    "trial": _cmd_trial,
    "exp1": _cmd_exp1,
    "exp2": _cmd_exp2,
    "diagnose": _cmd_diagnose,
}


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        _validate_common(args)
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, OracleError, ValueError, IndexError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
