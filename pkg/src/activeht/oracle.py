"""Max-min sensing allocation: worst-case information rate and its optimizer.

For a candidate hypothesis ``h`` and a set ``S`` of surviving opponents, the
worst-case information rate of an action allocation ``w`` is the smallest
``w``-weighted divergence row over ``g`` in ``S``.  The oracle allocation
maximizes that rate over the action simplex; the optimum is the speed limit
for accumulating evidence against the hardest opponent.

The optimizer is an equivalent linear program solved by a small dense
two-phase simplex method with Bland's anti-cycling pivot rule, so results
are deterministic for fixed inputs.  ``grid_oracle`` is an independent
brute-force check used by the test suite; it never feeds the solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .model import Environment

WEIGHT_CLAMP = 1e-12
SIMPLEX_SUM_TOL = 1e-9
PIVOT_TOL = 1e-9
RATE_TOL = 1e-8


class OracleError(ValueError):
    """Base class for allocation-solver failures."""


class DegenerateInstanceError(OracleError):
    """Some opponent has zero divergence under every action: the max-min
    rate is exactly 0 and no allocation can make progress against it."""


class GridTooLargeError(OracleError):
    """Brute-force enumeration was asked for an intractable grid."""


@dataclass(frozen=True)
class Allocation:
    """A point on the action simplex."""

    weights: tuple[float, ...]

    def __post_init__(self):
        if not self.weights:
            raise OracleError("allocation must have at least one weight")
        cleaned = []
        for w in self.weights:
            if w < -WEIGHT_CLAMP:
                raise OracleError(f"negative allocation weight {w}")
            cleaned.append(max(w, 0.0))
        total = sum(cleaned)
        if abs(total - 1.0) > SIMPLEX_SUM_TOL:
            raise OracleError(f"allocation weights sum to {total}, expected 1")
        object.__setattr__(self, "weights", tuple(cleaned))


@dataclass(frozen=True)
class OracleSolution:
    """An optimizer of the max-min program and the rate it achieves."""

    allocation: Allocation
    rate: float


def worst_case_rate(env: Environment, h: int, S, w) -> float:
    """min over g in S of the w-weighted divergence between h and g."""
    opponents = _check_opponents(env, h, S)
    weights = w.weights if isinstance(w, Allocation) else Allocation(tuple(w)).weights
    if len(weights) != env.num_actions:
        raise OracleError(
            f"allocation has {len(weights)} weights for {env.num_actions} actions"
        )
    d = env.kl_table.values
    return min(float(np.dot(weights, d[:, h, g])) for g in opponents)


def oracle_allocation(env: Environment, h: int, S) -> OracleSolution:
    """Deterministic exact optimizer of the max-min allocation program.

    Raises DegenerateInstanceError when some opponent in ``S`` has zero
    divergence from ``h`` under every action (the optimum rate is 0).
    """
    opponents = _check_opponents(env, h, S)
    maxd = env.max_divergence
    dead = [g for g in opponents if maxd[h][g] == 0.0]
    if dead:
        raise DegenerateInstanceError(
            f"opponents {dead} are indistinguishable from hypothesis {h}: rate 0"
        )
    weights = _solve_maxmin(env, h, opponents)
    alloc = Allocation(weights)
    return OracleSolution(allocation=alloc, rate=worst_case_rate(env, h, opponents, alloc))


def _solve_maxmin(env: Environment, h: int, opponents: list[int]) -> tuple[float, ...]:
    num_actions = env.num_actions
    d = env.kl_table.values
    if num_actions == 1:
        return (1.0,)
    if len(opponents) == 1:
        # Single minimum term: all mass on the most informative action.
        g = opponents[0]
        best = int(np.argmax(d[:, h, g]))
        return tuple(1.0 if a == best else 0.0 for a in range(num_actions))

    # Variables x = (w_0..w_{A-1}, z, s_g...), all nonnegative:
    #   sum_a d_a(h,g) w_a - z - s_g = 0   for each opponent g
    #   sum_a w_a = 1
    # maximized over z.  z >= 0 is valid because divergences are nonnegative.
    n_opp = len(opponents)
    n_var = num_actions + 1 + n_opp
    a_eq = np.zeros((n_opp + 1, n_var))
    b_eq = np.zeros(n_opp + 1)
    for i, g in enumerate(opponents):
        a_eq[i, :num_actions] = d[:, h, g]
        a_eq[i, num_actions] = -1.0
        a_eq[i, num_actions + 1 + i] = -1.0
    a_eq[n_opp, :num_actions] = 1.0
    b_eq[n_opp] = 1.0
    cost = np.zeros(n_var)
    cost[num_actions] = -1.0
    x = _simplex_min(cost, a_eq, b_eq)
    w = np.clip(x[:num_actions], 0.0, None)
    w /= w.sum()
    return tuple(float(v) for v in w)


def _simplex_min(cost, a_eq, b_eq, max_iter: int = 10_000) -> np.ndarray:
    """Minimize cost @ x subject to a_eq x = b_eq, x >= 0.

    Dense tableau, two phases, Bland's rule throughout (entering: lowest
    eligible column index; leaving: lowest basic-variable index among the
    minimum-ratio rows), so the pivot sequence is fully deterministic.
    """
    a = np.array(a_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0
    m, n = a.shape

    tab = np.hstack([a, np.eye(m)])
    rhs = b.copy()
    basis = list(range(n, n + m))
    phase1_cost = np.concatenate([np.zeros(n), np.ones(m)])
    _bland_iterate(tab, rhs, basis, phase1_cost, n + m, max_iter)
    if float(phase1_cost[basis] @ rhs) > 1e-7:
        raise OracleError("max-min program reported infeasible (solver bug)")

    # Drive leftover artificials out of the basis; drop redundant rows.
    keep = []
    for i in range(m):
        if basis[i] < n:
            keep.append(i)
            continue
        pivot_col = next(
            (j for j in range(n) if abs(tab[i, j]) > PIVOT_TOL), None
        )
        if pivot_col is None:
            continue
        _pivot(tab, rhs, basis, i, pivot_col)
        keep.append(i)
    if len(keep) < m:
        tab = tab[keep]
        rhs = rhs[keep]
        basis = [basis[i] for i in keep]

    # Artificial columns keep zero cost and can never re-enter: phase 2 only
    # considers the first n columns for entering variables.
    phase2_cost = np.zeros(tab.shape[1])
    phase2_cost[:n] = cost
    _bland_iterate(tab, rhs, basis, phase2_cost, n, max_iter)

    x = np.zeros(n)
    for i, var in enumerate(basis):
        if var < n:
            x[var] = rhs[i]
    return x


def _bland_iterate(tab, rhs, basis, cost, allowed_cols, max_iter):
    for _ in range(max_iter):
        reduced = cost[:allowed_cols] - cost[basis] @ tab[:, :allowed_cols]
        entering = -1
        for j in range(allowed_cols):
            if reduced[j] < -PIVOT_TOL:
                entering = j
                break
        if entering < 0:
            return
        col = tab[:, entering]
        leaving = -1
        best_ratio = np.inf
        for i in range(len(basis)):
            if col[i] <= PIVOT_TOL:
                continue
            ratio = rhs[i] / col[i]
            if leaving < 0 or ratio < best_ratio - PIVOT_TOL:
                best_ratio = ratio
                leaving = i
            elif abs(ratio - best_ratio) <= PIVOT_TOL and basis[i] < basis[leaving]:
                best_ratio = min(best_ratio, ratio)
                leaving = i
        if leaving < 0:
            raise OracleError("max-min program reported unbounded (solver bug)")
        _pivot(tab, rhs, basis, leaving, entering)
    raise OracleError("simplex failed to converge")


def _pivot(tab, rhs, basis, row, col):
    piv = tab[row, col]
    tab[row] /= piv
    rhs[row] /= piv
    for i in range(tab.shape[0]):
        if i != row and tab[i, col] != 0.0:
            rhs[i] -= tab[i, col] * rhs[row]
            tab[i] -= tab[i, col] * tab[row]
    basis[row] = col


_GRID_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _compositions(num_parts: int, total: int) -> np.ndarray:
    """Integer rows of length num_parts summing to total, lexicographic."""
    if num_parts == 1:
        return np.array([[float(total)]])
    if num_parts == 2:
        i = np.arange(total + 1, dtype=float)
        return np.column_stack([i, total - i])
    parts = []
    for i in range(total + 1):
        sub = _compositions(num_parts - 1, total - i)
        parts.append(np.column_stack([np.full(len(sub), float(i)), sub]))
    return np.vstack(parts)


def _simplex_grid(num_actions: int, n: int) -> np.ndarray:
    key = (num_actions, n)
    if key in _GRID_CACHE:
        return _GRID_CACHE[key]
    points = comb(n + num_actions - 1, num_actions - 1)
    if points > 20_000_000:
        raise GridTooLargeError(
            f"{points} grid points for {num_actions} actions at resolution 1/{n}"
        )
    grid = _compositions(num_actions, n) / n
    grid.setflags(write=False)
    _GRID_CACHE[key] = grid
    return grid


def grid_oracle(env: Environment, h: int, S, step: float) -> OracleSolution:
    """Exhaustive simplex-grid maximizer; the independent check for the LP.

    Only intended for small instances (at most 4 actions); the returned rate
    is within ``step * max divergence`` of the true optimum.
    """
    opponents = _check_opponents(env, h, S)
    if env.num_actions > 4:
        raise GridTooLargeError(
            f"{env.num_actions} actions cannot be enumerated; limit is 4"
        )
    if not 0.0 < step <= 0.5:
        raise OracleError(f"step must lie in (0, 0.5], got {step}")
    n = max(1, round(1.0 / step))
    grid = _simplex_grid(env.num_actions, n)
    d = env.kl_table.values
    rows = np.column_stack([d[:, h, g] for g in opponents])
    rates = (grid @ rows).min(axis=1)
    best = int(np.argmax(rates))
    alloc = Allocation(tuple(float(v) for v in grid[best]))
    return OracleSolution(allocation=alloc, rate=float(rates[best]))


def _check_opponents(env: Environment, h: int, S) -> list[int]:
    if not 0 <= h < env.num_hypotheses:
        raise IndexError(f"hypothesis index {h} out of range")
    opponents = sorted(set(int(g) for g in S))
    if not opponents:
        raise OracleError("opponent set must be nonempty")
    if h in opponents:
        raise OracleError(f"candidate hypothesis {h} cannot be its own opponent")
    for g in opponents:
        if not 0 <= g < env.num_hypotheses:
            raise IndexError(f"opponent index {g} out of range")
    return opponents


class OracleCache:
    """Memoized solutions keyed by (candidate, opponent bitmask).

    The divergence table is fixed per environment, so solutions can be
    shared by every trial that runs on it.  Also provides the engine-facing
    target, which stays well-defined when some opponents have zero
    divergence from the candidate: those opponents contribute a hard zero
    to the max-min value regardless of the allocation, so the target is
    computed over the distinguishable opponents (uniform if there are none)
    while the reported rate is the true max-min value 0.
    """

    def __init__(self, env: Environment):
        self.env = env
        self._solutions: dict[tuple[int, int], tuple[tuple[float, ...], float]] = {}

    def target(self, h: int, S) -> tuple[tuple[float, ...], float]:
        mask = 0
        for g in S:
            mask |= 1 << g
        key = (h, mask)
        hit = self._solutions.get(key)
        if hit is not None:
            return hit
        maxd = self.env.max_divergence
        live = [g for g in S if maxd[h][g] > 0.0]
        if len(live) == len(S):
            sol = oracle_allocation(self.env, h, live)
            value = (sol.allocation.weights, sol.rate)
        elif live:
            sol = oracle_allocation(self.env, h, live)
            value = (sol.allocation.weights, 0.0)
        else:
            n = self.env.num_actions
            value = (tuple(1.0 / n for _ in range(n)), 0.0)
        self._solutions[key] = value
        return value
