"""Water-level pricing: fair, risk-free prices with maximally even profits.

The scheme charges ``p = max(v - L, 0)`` per scenario, so the customer keeps
revenue up to the level ``L`` and hands over the excess.  ``L`` is chosen so
the expected price equals the expected starting price.  The map

    g(L) = E[max(v - L, 0)]

is continuous, piecewise linear and non-increasing, with breakpoints exactly
at the distinct revenue values, so the level is solved in closed form:
sort the revenues, evaluate g at each breakpoint via cumulative sums, locate
the bracketing segment, and invert the linear piece.  Large tables are first
narrowed by median partitioning, which classifies all but a bounded batch of
rows as certainly above or certainly below the level in linear total time,
so the sort never sees more than a cache-sized slice.  A bisection fallback
with the same feasibility handling is kept for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleFairness, InvalidScenarioValue
from .scenario import ScenarioTable, expected_starting_price

# Absolute tolerance of the bisection fallback, on the expectation scale.
BISECT_ATOL = 1e-12
_BISECT_MAX_STEPS = 200

# Tables larger than this are narrowed by partitioning before the sort, so
# the breakpoint scan only ever sorts rows near the level.
_NARROW_CUTOFF = 4096


@dataclass(frozen=True)
class TabulatedPriceFunction:
    """Per-row prices of the water-level scheme together with the level."""

    prices: np.ndarray
    level: float

    def __post_init__(self):
        prices = np.ascontiguousarray(np.asarray(self.prices, dtype=float))
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "level", float(self.level))


def threshold_revenue(table: ScenarioTable, level: float) -> np.ndarray:
    """Per-row revenue in excess of the level: ``max(v - level, 0)``."""
    level = float(level)
    if not np.isfinite(level):
        raise InvalidScenarioValue("level must be finite")
    return np.maximum(table.revenue - level, 0.0)


def _narrow_active_rows(v: np.ndarray, f: np.ndarray, target: float):
    """Discard rows that cannot border the level.

    Partitions the rows around median revenue pivots and evaluates g there:
    when g sits above the target the level lies higher, so rows at or below
    the pivot can never be active; when g sits below it, rows at or above
    the pivot are active for certain and only shift g by a linear term.
    Either way at least half the rows drop out, so the total work is linear.

    Returns the undecided rows plus the mass and value mass of the rows
    known to lie strictly above the level.
    """
    mass_above = 0.0
    value_above = 0.0
    while v.size > _NARROW_CUTOFF:
        pivot = float(np.partition(v, v.size // 2)[v.size // 2])
        above = v > pivot
        if above.any():
            va = v[above]
            fa = f[above]
            mass = mass_above + float(fa.sum())
            value = value_above + float(np.dot(va, fa))
        else:
            va, fa = v[:0], f[:0]
            mass, value = mass_above, value_above
        # g at the pivot: rows tied with it add zero.
        g_pivot = value - pivot * mass
        if g_pivot > target:
            v, f = va, fa
        elif g_pivot < target:
            # The level is below the pivot, so pivot-tied rows are active too.
            tie_mass = float(f[v == pivot].sum())
            mass_above = mass + tie_mass
            value_above = value + pivot * tie_mass
            below = v < pivot
            v, f = v[below], f[below]
        else:
            # The pivot is the level; keep its ties for the equality branch.
            mass_above, value_above = mass, value
            tie = v == pivot
            v, f = v[tie], f[tie]
            break
    return v, f, mass_above, value_above


def _solve_exact(table: ScenarioTable, target: float) -> float:
    v = table.revenue
    f = table.mass
    mass_above = 0.0
    value_above = 0.0
    if v.size > _NARROW_CUTOFF:
        v, f, mass_above, value_above = _narrow_active_rows(v, f, target)
        if v.size == 0:
            # Every row was classified; the active segment is linear.
            return (value_above - target) / mass_above
    order = np.argsort(v)[::-1]
    vs = v[order]
    fs = f[order]
    cf = mass_above + np.cumsum(fs)
    cvf = value_above + np.cumsum(vs * fs)
    # g evaluated at each sorted revenue; rows tied with the pivot add zero,
    # so inclusive cumulative sums are correct regardless of ties.
    g = cvf - vs * cf
    n = vs.shape[0]
    j = int(np.searchsorted(g, target, side="left"))
    if j < n and g[j] == target:
        return float(vs[j])
    if j == n:
        # Below the smallest undecided revenue every row is active.
        active_f = float(cf[-1])
        active_vf = value_above + float(np.dot(vs, fs))
    else:
        # Level sits strictly between vs[j] and vs[j-1]; the first j sorted
        # rows are the active ones.  Re-sum the slice with a pairwise dot to
        # sharpen the running-sum values.
        active_f = mass_above + float(fs[:j].sum())
        active_vf = value_above + float(np.dot(vs[:j], fs[:j]))
    return (active_vf - target) / active_f


def _solve_bisect(table: ScenarioTable, target: float) -> float:
    v = table.revenue
    f = table.mass

    def g(level: float) -> float:
        return float(np.dot(f, np.maximum(v - level, 0.0)))

    hi = float(v.max())
    lo = min(0.0, float(v.min()), float(np.dot(f, v)) - target) - 1.0
    mid = hi
    for _ in range(_BISECT_MAX_STEPS):
        mid = 0.5 * (lo + hi)
        gap = g(mid) - target
        if abs(gap) <= BISECT_ATOL:
            return mid
        if gap > 0.0:
            lo = mid
        else:
            hi = mid
    return mid


def solve_level(table: ScenarioTable, *, allow_negative_level: bool = False,
                method: str = "exact") -> float:
    """Level L with ``E[max(v - L, 0)]`` equal to the expected starting price.

    By default the level is constrained to be non-negative, which keeps the
    scheme risk-free; when the expected starting price exceeds what
    non-negative prices can retrieve, ``InfeasibleFairness`` reports the
    shortfall.  Opting in with ``allow_negative_level=True`` pushes the level
    below zero instead, charging some rows more than their revenue.

    ``method`` is ``"exact"`` (breakpoint inversion) or ``"bisect"`` (the
    slower interval-halving fallback, kept for cross-checks).
    """
    if method not in ("exact", "bisect"):
        raise ValueError(f"unknown method {method!r}")
    target = expected_starting_price(table)
    retrievable = float(np.dot(table.mass, np.maximum(table.revenue, 0.0)))
    feasible = target <= retrievable
    if not feasible and not allow_negative_level:
        raise InfeasibleFairness(target, retrievable)
    if method == "exact":
        level = _solve_exact(table, target)
    else:
        level = _solve_bisect(table, target)
    # A feasible target implies a non-negative level; clamp the rounding tail.
    if feasible and level < 0.0:
        level = 0.0
    return float(level)


def waterlevel_pricing(table: ScenarioTable, *,
                       allow_negative_level: bool = False,
                       method: str = "exact") -> TabulatedPriceFunction:
    """Solve the level and tabulate ``max(v - L, 0)`` per row."""
    level = solve_level(table, allow_negative_level=allow_negative_level,
                        method=method)
    return TabulatedPriceFunction(prices=threshold_revenue(table, level),
                                  level=level)
