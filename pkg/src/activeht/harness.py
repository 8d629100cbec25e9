"""Seeded Monte Carlo experiment driver: sweeps, aggregation, result tables.

Every trial draws its seed from a stable 64-bit mix of (policy, delta,
alpha, trial index) XOR the base seed, so any cell can be reproduced in
isolation, adding policies never perturbs existing cells, and results are
identical no matter how many workers execute them.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import struct
from dataclasses import dataclass
from math import nan, sqrt
from pathlib import Path

from .engine import (
    DEFAULT_B,
    DiagnosticsTrace,
    POLICY_KINDS,
    PolicyConfig,
    TrialResult,
    run_trial,
)
from .model import Environment, load_environment
from .oracle import OracleCache

DELTA_GRID = (0.1, 0.05, 0.01, 0.005, 0.001)
ALPHA_GRID = (0.2, 0.4, 0.6, 0.8, 1.0)

CSV_HEADER = "environment,policy,delta,alpha,mean_tau,stderr_tau,error_rate,timeouts,trials"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs; hashable and cheap to copy around workers."""

    environment: str | Environment
    true_h: int = 0
    policies: tuple[str, ...] = POLICY_KINDS
    deltas: tuple[float, ...] = DELTA_GRID
    alphas: tuple[float, ...] = ALPHA_GRID
    trials: int = 1000
    base_seed: int = 0
    workers: int = 1
    out: str | None = None
    b: float = DEFAULT_B
    c: float | None = None
    max_steps: int = 1_000_000
    paired_seeds: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.deltas or not self.alphas or not self.policies:
            raise ValueError("policy, delta, and alpha grids must be nonempty")
        if any(not 0.0 < d < 1.0 for d in self.deltas):
            raise ValueError(f"all deltas must lie in (0, 1): {self.deltas}")
        if any(not 0.0 < a <= 1.0 for a in self.alphas):
            raise ValueError(f"all alphas must lie in (0, 1]: {self.alphas}")
        if any(p not in POLICY_KINDS for p in self.policies):
            raise ValueError(f"unknown policy in {self.policies}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass(frozen=True)
class SummaryRow:
    """Monte Carlo aggregates for one (environment, policy, delta, alpha) cell.

    ``mean_tau``/``stderr_tau`` cover completed (non-timed-out) trials only
    and are NaN when every trial timed out; ``error_rate`` is the wrong-
    recommendation fraction among completed trials.  Capped-inclusive views
    are available as methods.
    """

    environment: str
    policy: str
    delta: float
    alpha: float
    mean_tau: float
    stderr_tau: float
    error_rate: float
    timeouts: int
    trials: int

    @property
    def completed(self) -> int:
        return self.trials - self.timeouts

    def failure_rate(self) -> float:
        """Fraction of trials that were wrong or never stopped."""
        wrong = round(self.error_rate * self.completed) if self.completed else 0
        return (wrong + self.timeouts) / self.trials

    def capped_mean_tau(self, max_steps: int) -> float:
        """Mean stopping time with timed-out trials entering at the cap."""
        if self.completed == 0:
            return float(max_steps)
        return (self.mean_tau * self.completed + self.timeouts * max_steps) / self.trials


def trial_seed(base_seed: int, policy: str, delta: float, alpha: float, index: int,
               paired: bool = False) -> int:
    """Stable per-trial seed; with ``paired=True`` policies share streams."""
    tag = b"" if paired else policy.encode()
    payload = struct.pack("<ddq", float(delta), float(alpha), int(index)) + tag
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return (int(base_seed) ^ int.from_bytes(digest, "little")) & ((1 << 63) - 1)


def aggregate(results, *, environment: str = "", policy: str = "",
              delta: float = nan, alpha: float = nan) -> SummaryRow:
    """Order-insensitive reduction of trial outcomes into one summary row."""
    results = list(results)
    if not results:
        raise ValueError("cannot aggregate an empty result sequence")
    taus = [r.tau for r in results if not r.timed_out]
    timeouts = sum(1 for r in results if r.timed_out)
    if taus:
        mean = sum(taus) / len(taus)
        if len(taus) > 1:
            var = sum((x - mean) ** 2 for x in taus) / (len(taus) - 1)
            stderr = sqrt(var / len(taus))
        else:
            stderr = 0.0
        wrong = sum(1 for r in results if not r.timed_out and not r.correct)
        error_rate = wrong / len(taus)
    else:
        mean = stderr = error_rate = nan
    return SummaryRow(
        environment=environment,
        policy=policy,
        delta=delta,
        alpha=alpha,
        mean_tau=mean,
        stderr_tau=stderr,
        error_rate=error_rate,
        timeouts=timeouts,
        trials=len(results),
    )


def resolve_environment(source) -> Environment:
    if isinstance(source, Environment):
        return source
    return load_environment(source)


# Per-process state for pool workers: the environment and the allocation
# cache are built once per process, not once per trial.
_WORKER_ENV: Environment | None = None
_WORKER_CACHE: OracleCache | None = None


def _pool_init(env: Environment) -> None:
    global _WORKER_ENV, _WORKER_CACHE
    _WORKER_ENV = env
    _WORKER_CACHE = OracleCache(env)


def _pool_run(args) -> tuple[int, int, bool, bool]:
    kind, delta, alpha, b, c, max_steps, true_h, seed = args
    cfg = PolicyConfig(kind=kind, delta=delta, alpha=alpha, b=b, c=c, max_steps=max_steps)
    r = run_trial(_WORKER_ENV, true_h, cfg, seed, cache=_WORKER_CACHE)
    return r.tau, r.recommendation, r.correct, r.timed_out


def _run_cell(env, cache, pool, ecfg: ExperimentConfig, kind: str, delta: float,
              alpha: float) -> list[TrialResult]:
    seeds = [
        trial_seed(ecfg.base_seed, kind, delta, alpha, i, ecfg.paired_seeds)
        for i in range(ecfg.trials)
    ]
    if pool is None:
        cfg = PolicyConfig(kind=kind, delta=delta, alpha=alpha, b=ecfg.b, c=ecfg.c,
                           max_steps=ecfg.max_steps)
        return [run_trial(env, ecfg.true_h, cfg, s, cache=cache) for s in seeds]
    args = [
        (kind, delta, alpha, ecfg.b, ecfg.c, ecfg.max_steps, ecfg.true_h, s)
        for s in seeds
    ]
    chunk = max(1, ecfg.trials // (ecfg.workers * 4))
    outs = pool.map(_pool_run, args, chunksize=chunk)
    return [
        TrialResult(tau=t, recommendation=r, correct=c, timed_out=to)
        for t, r, c, to in outs
    ]


def _sweep(ecfg: ExperimentConfig, cells) -> list[SummaryRow]:
    env = resolve_environment(ecfg.environment)
    rows = []
    if ecfg.workers > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(ecfg.workers, initializer=_pool_init, initargs=(env,)) as pool:
            for kind, delta, alpha in cells:
                results = _run_cell(env, None, pool, ecfg, kind, delta, alpha)
                rows.append(aggregate(results, environment=env.name, policy=kind,
                                      delta=delta, alpha=alpha))
    else:
        cache = OracleCache(env)
        for kind, delta, alpha in cells:
            results = _run_cell(env, cache, None, ecfg, kind, delta, alpha)
            rows.append(aggregate(results, environment=env.name, policy=kind,
                                  delta=delta, alpha=alpha))
    rows.sort(key=lambda r: (r.policy, -r.delta, r.alpha))
    if ecfg.out:
        write_summary_csv(rows, ecfg.out)
    return rows


def run_delta_sweep(ecfg: ExperimentConfig) -> list[SummaryRow]:
    """One row per (policy, delta) cell at alpha = 1."""
    cells = [(kind, delta, 1.0) for kind in ecfg.policies for delta in ecfg.deltas]
    return _sweep(ecfg, cells)


def run_alpha_sweep(ecfg: ExperimentConfig) -> list[SummaryRow]:
    """One row per alpha for the elimination-aware policy at a fixed delta.

    The fixed delta is the first entry of ``ecfg.deltas``.  The alpha = 1
    row reproduces the corresponding delta-sweep cell exactly: the per-trial
    seeds depend on (policy, delta, alpha, index) only.
    """
    delta = ecfg.deltas[0]
    cells = [("FullElim", delta, alpha) for alpha in ecfg.alphas]
    return _sweep(ecfg, cells)


def run_diagnostic_trial(ecfg: ExperimentConfig, seed: int) -> DiagnosticsTrace:
    """Record the full per-round internals of one elimination-aware trial."""
    env = resolve_environment(ecfg.environment)
    delta = ecfg.deltas[0]
    alpha = ecfg.alphas[0] if len(ecfg.alphas) == 1 else 1.0
    cfg = PolicyConfig(kind="FullElim", delta=delta, alpha=alpha, b=ecfg.b, c=ecfg.c,
                       max_steps=ecfg.max_steps)
    result = run_trial(env, ecfg.true_h, cfg, seed, record_diagnostics=True)
    trace = result.diagnostics
    trace.meta["tau"] = result.tau
    trace.meta["recommendation"] = result.recommendation
    trace.meta["correct"] = result.correct
    trace.meta["timed_out"] = result.timed_out
    if ecfg.out:
        Path(ecfg.out).write_text(json.dumps(trace.to_document()) + "\n")
    return trace


def summary_to_csv(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r.environment},{r.policy},{r.delta:g},{r.alpha:g},"
            f"{r.mean_tau:.6f},{r.stderr_tau:.6f},{r.error_rate:.6f},"
            f"{r.timeouts},{r.trials}"
        )
    return "\n".join(lines) + "\n"


def write_summary_csv(rows, path) -> None:
    Path(path).write_text(summary_to_csv(rows))


def read_summary_csv(path) -> list[SummaryRow]:
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0] != CSV_HEADER:
        raise ValueError(f"{path} does not carry the expected summary header")
    rows = []
    for line in text[1:]:
        env, policy, delta, alpha, mean, stderr, err, timeouts, trials = line.split(",")
        rows.append(SummaryRow(
            environment=env, policy=policy, delta=float(delta), alpha=float(alpha),
            mean_tau=float(mean), stderr_tau=float(stderr), error_rate=float(err),
            timeouts=int(timeouts), trials=int(trials),
        ))
    return rows
