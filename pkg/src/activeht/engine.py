"""Single-trial execution of the four sequential identification policies.

A trial maintains cumulative log-likelihoods for every hypothesis, a
maximum-likelihood champion, per-candidate active-opponent sets, and a
cumulative sampling target.  Policies differ in two places only:

* sampling: ``Greedy`` chases the largest instantaneous divergence between
  the champion and its closest rival; ``TaS`` and ``StopElim`` track the
  max-min allocation against the full opponent set; ``FullElim`` tracks it
  against the champion's surviving opponents.
* stopping: ``Greedy``/``TaS`` stop when the smallest champion-vs-opponent
  log-likelihood ratio clears the stopping threshold; ``StopElim``/
  ``FullElim`` eliminate opponents one by one as their ratios clear the
  elimination threshold and stop when the champion's set empties.

Trials are pure functions of (environment, true hypothesis, config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import log, sqrt

import numpy as np

from .model import Environment
from .oracle import OracleCache

POLICY_KINDS = ("Greedy", "TaS", "StopElim", "FullElim")

# Threshold shape: beta(t) = (alpha *) log(1/delta) + b*log(t) + c.  The slope
# b and offset c trade identification speed against the rate of early false
# eliminations; these defaults are calibrated on the built-in environments
# (see tests) and can be overridden per run.  c defaults to the union-bound
# offset log(K - 1) plus a calibrated shift.
DEFAULT_B = 0.8
DEFAULT_C = None
DEFAULT_C_OFFSET = -1.7863

_RNG_BLOCK = 512


@dataclass(frozen=True)
class PolicyConfig:
    """Policy selection plus every constant the stopping logic needs.

    ``c=None`` resolves to ``log(K - 1) + DEFAULT_C_OFFSET`` for the
    environment the trial runs on: a union-bound offset over the K - 1
    opponents plus a calibrated shift.
    """

    kind: str
    delta: float
    alpha: float = 1.0
    b: float = DEFAULT_B
    c: float | None = DEFAULT_C
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; choose from {POLICY_KINDS}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.b > 0.0:
            raise ValueError(f"threshold slope b must be positive, got {self.b}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be at least 1, got {self.max_steps}")


def resolve_config(cfg: PolicyConfig, env: Environment) -> PolicyConfig:
    """Fill in environment-dependent defaults (the threshold offset c)."""
    if cfg.c is not None:
        return cfg
    return replace(cfg, c=log(max(env.num_hypotheses - 1, 1)) + DEFAULT_C_OFFSET)


def thresholds(t: int, cfg: PolicyConfig) -> tuple[float, float]:
    """(beta_stop, beta_elim) at step t >= 1.

    beta_stop = log(1/delta) + b log t + c and beta_elim replaces the first
    term with alpha*log(1/delta); the two coincide exactly when alpha = 1.
    """
    if t < 1:
        raise ValueError(f"thresholds are defined for t >= 1, got {t}")
    if cfg.c is None:
        raise ValueError("config has unresolved c; call resolve_config first")
    gamma = cfg.b * log(t) + cfg.c
    level = log(1.0 / cfg.delta)
    return level + gamma, cfg.alpha * level + gamma


@dataclass
class TrialState:
    """Mutable per-trial record; confined to a single worker."""

    t: int
    counts: list[int]
    loglik: list[float]
    target: list[float]
    active: list[set[int]]
    champion: int


def new_trial_state(env: Environment) -> TrialState:
    k = env.num_hypotheses
    return TrialState(
        t=0,
        counts=[0] * env.num_actions,
        loglik=[0.0] * k,
        target=[0.0] * env.num_actions,
        active=[set(g for g in range(k) if g != i) for i in range(k)],
        champion=0,
    )


def update_likelihoods(state: TrialState, env: Environment, a: int, o: float) -> TrialState:
    """Fold one observation into every hypothesis' log-likelihood.

    Increments the action counter, advances the step counter, and recomputes
    the champion (lowest index on exact ties).  Eliminated hypotheses keep
    being updated: a returning champion still consults their likelihoods.
    """
    row = env.means[a]
    scale = -0.5 / (env.sigma * env.sigma)
    loglik = state.loglik
    for h in range(len(loglik)):
        gap = o - row[h]
        loglik[h] += scale * gap * gap
    state.counts[a] += 1
    state.t += 1
    best = 0
    best_val = loglik[0]
    for h in range(1, len(loglik)):
        if loglik[h] > best_val:
            best = h
            best_val = loglik[h]
    state.champion = best
    return state


def llr(state: TrialState, h: int, g: int) -> float:
    """Cumulative evidence for h over g: difference of log-likelihoods."""
    if h == g:
        raise ValueError("log-likelihood ratio requires two distinct hypotheses")
    return state.loglik[h] - state.loglik[g]


def _floor_projection(w, eps: float):
    """Smallest uniform mixing of ``w`` that puts at least eps on every action."""
    wmin = min(w)
    if wmin >= eps:
        return w
    eta = (eps - wmin) / (1.0 - len(w) * eps)
    denom = 1.0 + len(w) * eta
    return [(wi + eta) / denom for wi in w]


def ctrack_select(state: TrialState, target_now) -> int:
    """Accumulate the tracking target, then pull the most under-sampled action.

    The instantaneous target is floored at eps_t = 1 / (2 sqrt(t + A^2))
    before accumulation, which forces every action to be explored at a
    sqrt(t) rate no matter how lopsided the oracle allocations are.  Ties in
    the deficit go to the lowest action index.
    """
    weights = target_now.weights if hasattr(target_now, "weights") else target_now
    num_actions = len(state.target)
    eps = 0.5 / sqrt(num_actions * num_actions + state.t)
    floored = _floor_projection(weights, eps)
    target = state.target
    counts = state.counts
    best = 0
    target[0] += floored[0]
    best_deficit = target[0] - counts[0]
    for a in range(1, num_actions):
        target[a] += floored[a]
        deficit = target[a] - counts[a]
        if deficit > best_deficit:
            best = a
            best_deficit = deficit
    return best


def eliminate(state: TrialState, cfg: PolicyConfig) -> set[int]:
    """Drop every current-champion opponent whose ratio clears beta_elim.

    Only the champion's active set changes; the removed opponents are
    returned.  Called right after the champion update, so ``state.t`` is
    the step the threshold is evaluated at.
    """
    _, beta_elim = thresholds(state.t, cfg)
    ch = state.champion
    level = state.loglik[ch]
    loglik = state.loglik
    survivors = state.active[ch]
    removed = {g for g in survivors if level - loglik[g] >= beta_elim}
    survivors -= removed
    return removed


def greedy_select(state: TrialState, env: Environment) -> int:
    """Most informative action for the champion against its closest rival.

    The rival is the opponent with the smallest log-likelihood ratio
    (lowest index on ties); the action maximizes the pairwise divergence
    (lowest index on ties).  Before any observation, action 0 is pulled.
    """
    if state.t == 0:
        return 0
    ch = state.champion
    loglik = state.loglik
    rival = -1
    rival_val = None
    for g in range(len(loglik)):
        if g == ch:
            continue
        if rival_val is None or loglik[g] > rival_val:
            rival = g
            rival_val = loglik[g]
    return int(env.best_action[ch][rival])


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one trial."""

    tau: int
    recommendation: int
    correct: bool
    timed_out: bool
    diagnostics: "DiagnosticsTrace | None" = None


@dataclass
class DiagnosticsTrace:
    """Per-round internals of a recorded trial, one list entry per step.

    ``active_set`` is the champion's surviving opponent set after the
    round's eliminations; ``min_z`` is the smallest champion-vs-survivor
    ratio before them.  ``oracle_rate``/``empirical_rate`` are the max-min
    value and its empirical-allocation counterpart for that set, or None on
    the final round once the set is empty.  ``events`` lists the opponents
    removed in the round.
    """

    meta: dict = field(default_factory=dict)
    t: list[int] = field(default_factory=list)
    champion: list[int] = field(default_factory=list)
    active_set: list[list[int]] = field(default_factory=list)
    alloc: list[list[float]] = field(default_factory=list)
    counts: list[list[int]] = field(default_factory=list)
    target_avg: list[list[float]] = field(default_factory=list)
    min_z: list[float] = field(default_factory=list)
    beta_elim: list[float] = field(default_factory=list)
    oracle_rate: list[float | None] = field(default_factory=list)
    empirical_rate: list[float | None] = field(default_factory=list)
    events: list[list[int]] = field(default_factory=list)

    def elimination_times(self) -> list[int]:
        return [step for step, removed in zip(self.t, self.events) if removed]

    def to_document(self) -> dict:
        doc = {
            "meta": self.meta,
            "t": self.t,
            "champion": self.champion,
            "active_set": self.active_set,
            "alloc": self.alloc,
            "counts": self.counts,
            "target_avg": self.target_avg,
            "min_Z": self.min_z,
            "beta_elim": self.beta_elim,
            "oracle_rate": self.oracle_rate,
            "empirical_rate": self.empirical_rate,
            "events": self.events,
        }
        return doc

    @classmethod
    def from_document(cls, doc: dict) -> "DiagnosticsTrace":
        return cls(
            meta=doc.get("meta", {}),
            t=list(doc["t"]),
            champion=list(doc["champion"]),
            active_set=[list(s) for s in doc["active_set"]],
            alloc=[list(a) for a in doc["alloc"]],
            counts=[list(c) for c in doc.get("counts", [])],
            target_avg=[list(u) for u in doc.get("target_avg", [])],
            min_z=list(doc["min_Z"]),
            beta_elim=list(doc["beta_elim"]),
            oracle_rate=list(doc["oracle_rate"]),
            empirical_rate=list(doc["empirical_rate"]),
            events=[list(e) for e in doc["events"]],
        )


def run_trial(
    env: Environment,
    true_h: int,
    cfg: PolicyConfig,
    seed: int,
    record_diagnostics: bool = False,
    cache: OracleCache | None = None,
) -> TrialResult:
    """Simulate one full trial; deterministic given (env, true_h, cfg, seed).

    A shared ``cache`` may be passed to reuse allocation solutions across
    trials on the same environment; it never changes the outcome.
    """
    if not 0 <= true_h < env.num_hypotheses:
        raise IndexError(f"true hypothesis {true_h} out of range")
    if env.num_hypotheses < 2:
        raise ValueError("identification needs at least two hypotheses")
    cfg = resolve_config(cfg, env)
    if cache is None:
        cache = OracleCache(env)
    rng = np.random.default_rng(seed)
    state = new_trial_state(env)

    kind = cfg.kind
    tracking = kind != "Greedy"
    eliminating = kind in ("StopElim", "FullElim")
    k = env.num_hypotheses
    means = env.means
    sigma = env.sigma
    true_means = [means[a][true_h] for a in range(env.num_actions)]
    full_opponents = [tuple(g for g in range(k) if g != i) for i in range(k)]

    trace = None
    d_table = None
    if record_diagnostics:
        trace = DiagnosticsTrace(
            meta={
                "environment": env.name,
                "policy": kind,
                "delta": cfg.delta,
                "alpha": cfg.alpha,
                "b": cfg.b,
                "c": cfg.c,
                "true_h": true_h,
                "seed": int(seed),
            }
        )
        d_table = env.kl_table.values

    buf = rng.standard_normal(_RNG_BLOCK)
    buf_i = 0

    while True:
        ch = state.champion
        if tracking:
            if kind == "FullElim":
                target_set = state.active[ch]
            else:
                target_set = full_opponents[ch]
            w, _ = cache.target(ch, target_set)
            a = ctrack_select(state, w)
        else:
            a = greedy_select(state, env)

        if buf_i == _RNG_BLOCK:
            buf = rng.standard_normal(_RNG_BLOCK)
            buf_i = 0
        o = true_means[a] + sigma * buf[buf_i]
        buf_i += 1

        update_likelihoods(state, env, a, o)
        t = state.t
        ch = state.champion
        level = state.loglik[ch]

        if eliminating:
            pre_set = sorted(state.active[ch]) if record_diagnostics else None
            removed = eliminate(state, cfg)
            stopped = not state.active[ch]
        else:
            beta_stop, _ = thresholds(t, cfg)
            min_z = min(level - state.loglik[g] for g in full_opponents[ch])
            removed = set()
            stopped = min_z >= beta_stop
            pre_set = list(full_opponents[ch]) if record_diagnostics else None

        if record_diagnostics:
            _record_round(trace, state, env, cfg, cache, d_table, pre_set, removed)

        if stopped:
            return TrialResult(
                tau=t,
                recommendation=ch,
                correct=ch == true_h,
                timed_out=False,
                diagnostics=trace,
            )
        if t >= cfg.max_steps:
            return TrialResult(
                tau=cfg.max_steps,
                recommendation=ch,
                correct=ch == true_h,
                timed_out=True,
                diagnostics=trace,
            )


def _record_round(trace, state, env, cfg, cache, d_table, pre_set, removed):
    t = state.t
    ch = state.champion
    level = state.loglik[ch]
    survivors = sorted(state.active[ch]) if cfg.kind in ("StopElim", "FullElim") else pre_set
    _, beta_elim = thresholds(t, cfg)
    trace.t.append(t)
    trace.champion.append(ch)
    trace.active_set.append(list(survivors))
    alloc = [n / t for n in state.counts]
    trace.alloc.append(alloc)
    trace.counts.append(list(state.counts))
    trace.target_avg.append([w / t for w in state.target])
    trace.min_z.append(min(level - state.loglik[g] for g in pre_set) if pre_set else float("inf"))
    trace.beta_elim.append(beta_elim)
    trace.events.append(sorted(removed))
    if survivors:
        _, rate = cache.target(ch, survivors)
        emp = min(float(np.dot(alloc, d_table[:, ch, g])) for g in survivors)
        trace.oracle_rate.append(rate)
        trace.empirical_rate.append(emp)
    else:
        trace.oracle_rate.append(None)
        trace.empirical_rate.append(None)
