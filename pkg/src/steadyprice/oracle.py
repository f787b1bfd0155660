"""Independent certification oracles: exhaustive search and simulation.

Nothing here shares algorithmic machinery with the pricing modules: the
steady oracle walks a price grid, the linear oracle enumerates sign
patterns, and the simulator plays the priced service forward with a seeded
generator.  Agreement between an oracle and the corresponding solver is
evidence, not construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, TooLarge
from .linear_pricing import LinearPriceFunction, linear_pricing
from .scenario import (
    DEFAULT_RHO_SET,
    ScenarioTable,
    expected_starting_price,
)
from .waterfill import TabulatedPriceFunction, waterlevel_pricing

MAX_ORACLE_ROWS = 6
MAX_ORACLE_RESOURCES = 2
# Cap on grid candidates so a careless grid step cannot stall the process.
MAX_GRID_CANDIDATES = 50_000_000
# Oracle candidates clamp tiny negative enumeration artifacts at this level.
ACTIVE_SET_FEASIBILITY_SLACK = 1e-12

_EPISODE_BLOCK_ELEMENTS = 4_194_304
_MAX_EPISODE_BLOCK = 4096


@dataclass(frozen=True)
class SimulationConfig:
    """Seeded Monte Carlo settings.

    ``draws`` is the episode length; ``episodes`` independent restarts are
    played, each starting from ``budget`` capital.
    """

    draws: int
    seed: int
    budget: float = 0.0
    episodes: int = 1

    def __post_init__(self):
        if int(self.draws) < 1:
            raise ValueError("draws must be >= 1")
        if int(self.episodes) < 1:
            raise ValueError("episodes must be >= 1")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not np.isfinite(self.budget) or self.budget < 0:
            raise ValueError("budget must be finite and >= 0")
        object.__setattr__(self, "draws", int(self.draws))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "episodes", int(self.episodes))
        object.__setattr__(self, "budget", float(self.budget))


@dataclass(frozen=True)
class SimulationReport:
    """Empirical statistics of simulated per-draw profits.

    ``ruin_probability`` is the fraction of episodes whose running capital
    (budget plus accumulated profit) drops strictly below zero at some
    draw.  Provider-side revenue statistics are included for inspection.
    """

    draws: int
    episodes: int
    seed: int
    budget: float
    mean_profit: float
    profit_variance: float
    min_profit: float
    ruin_probability: float
    provider_revenue_mean: float
    provider_revenue_variance: float

    def to_dict(self) -> dict:
        return {
            "draws": self.draws,
            "episodes": self.episodes,
            "seed": self.seed,
            "budget": self.budget,
            "mean_profit": self.mean_profit,
            "profit_variance": self.profit_variance,
            "min_profit": self.min_profit,
            "ruin_probability": self.ruin_probability,
            "provider_revenue_mean": self.provider_revenue_mean,
            "provider_revenue_variance": self.provider_revenue_variance,
        }


@dataclass(frozen=True)
class SteadyOracleResult:
    """Best grid candidates of the exhaustive steady search."""

    prices_by_rho: dict[float, np.ndarray]
    moments_by_rho: dict[float, float]
    max_min_profit: float
    max_min_profit_prices: np.ndarray
    candidates: int


@dataclass(frozen=True)
class LinearOracleResult:
    """Best sign pattern of the exhaustive linear search."""

    coefficients: np.ndarray
    variance: float
    fairness_residual: float
    patterns_checked: int


def _broadcast_sum(per_axis: list[np.ndarray]) -> np.ndarray:
    """Sum over the cartesian product of axis values, flattened."""
    if not per_axis:
        return np.zeros(1)
    k = len(per_axis)
    out = np.zeros([len(v) for v in per_axis])
    for i, vals in enumerate(per_axis):
        shape = [1] * k
        shape[i] = len(vals)
        out = out + vals.reshape(shape)
    return out.ravel()


def _broadcast_min(per_axis: list[np.ndarray]) -> np.ndarray:
    if not per_axis:
        return np.full(1, np.inf)
    k = len(per_axis)
    out = np.full([len(v) for v in per_axis], -np.inf)
    out[...] = per_axis[0].reshape([-1] + [1] * (k - 1))
    for i, vals in enumerate(per_axis[1:], start=1):
        shape = [1] * k
        shape[i] = len(vals)
        out = np.minimum(out, vals.reshape(shape))
    return out.ravel()


def brute_force_steady(table: ScenarioTable, grid_step: float,
                       rho_set=DEFAULT_RHO_SET) -> SteadyOracleResult:
    """Exhaustive search over exactly fair non-negative price vectors.

    For each choice of a free row, every other row's price runs over the
    grid ``0, grid_step, ...`` up to the value bound, and the free row's
    price is solved from the fairness constraint (kept only when it lands
    non-negative), so every candidate scored is exactly fair.  Returns the
    best candidate per deviation exponent plus the candidate maximizing the
    minimum profit.

    Raises ``TooLarge`` for more than 6 rows, or when the grid would hold
    an unreasonable number of candidates.
    """
    n = table.n_rows
    if n > MAX_ORACLE_ROWS:
        raise TooLarge(
            f"steady oracle handles at most {MAX_ORACLE_ROWS} rows, "
            f"got {n}; shrink the table or use the solver without "
            f"exhaustive certification"
        )
    grid_step = float(grid_step)
    if not np.isfinite(grid_step) or grid_step <= 0:
        raise ValueError("grid_step must be positive")
    rhos = sorted({2.0} | {float(r) for r in rho_set})
    if any(r <= 1.0 for r in rhos):
        raise ValueError("deviation-moment exponents must be > 1")

    f = table.mass
    v = table.revenue
    target = expected_starting_price(table)
    mu = float(np.dot(f, v)) - target
    bound = max(float(v.max()), float(table.starting_price.max()), 0.0)
    grid = np.arange(0.0, bound + 0.5 * grid_step, grid_step)
    n_grid = len(grid)
    total = n * n_grid ** max(n - 1, 0)
    if total > MAX_GRID_CANDIDATES:
        raise TooLarge(
            f"grid search would score about {total:.2e} candidates; "
            f"coarsen grid_step or shrink the table"
        )

    best_moment = {r: np.inf for r in rhos}
    best_prices = {r: None for r in rhos}
    best_min_profit = -np.inf
    best_min_prices = None
    candidates = 0

    for free in range(n):
        others = [k for k in range(n) if k != free]
        # Per-row, per-grid-value ingredients.
        weighted = [grid * f[k] for k in others]
        deviations = [np.abs(v[k] - mu - grid) for k in others]
        profit_at = [v[k] - grid for k in others]
        spent = _broadcast_sum(weighted)
        free_price = (target - spent) / f[free]
        valid = free_price >= 0.0
        if not valid.any():
            continue
        candidates += int(np.count_nonzero(valid))
        free_profit = v[free] - free_price
        free_dev = np.abs(free_profit - mu)
        min_profit = np.minimum(_broadcast_min(profit_at), free_profit)
        min_profit = np.where(valid, min_profit, -np.inf)
        flat_best = int(np.argmax(min_profit))
        if min_profit[flat_best] > best_min_profit:
            best_min_profit = float(min_profit[flat_best])
            best_min_prices = _decode_candidate(
                flat_best, others, free, grid, free_price, n)
        for r in rhos:
            moment = f[free] * free_dev ** r + _broadcast_sum(
                [f[k] * dev ** r for k, dev in zip(others, deviations)])
            moment = np.where(valid, moment, np.inf)
            flat = int(np.argmin(moment))
            if moment[flat] < best_moment[r]:
                best_moment[r] = float(moment[flat])
                best_prices[r] = _decode_candidate(
                    flat, others, free, grid, free_price, n)

    return SteadyOracleResult(
        prices_by_rho={r: best_prices[r] for r in rhos},
        moments_by_rho=dict(best_moment),
        max_min_profit=best_min_profit,
        max_min_profit_prices=best_min_prices,
        candidates=candidates,
    )


def _decode_candidate(flat: int, others: list[int], free: int,
                      grid: np.ndarray, free_price: np.ndarray,
                      n: int) -> np.ndarray:
    prices = np.zeros(n)
    if others:
        idx = np.unravel_index(flat, [len(grid)] * len(others))
        for row, gi in zip(others, idx):
            prices[row] = grid[gi]
    prices[free] = free_price[flat]
    return prices


def brute_force_linear(table: ScenarioTable) -> LinearOracleResult:
    """Exhaustive search over coefficient sign patterns.

    For every subset of coefficients pinned to zero, solve the
    mass-weighted equality-constrained least squares on the free ones via
    the stationarity system with one multiplier for fairness, keep the
    solutions whose free coefficients are non-negative (tiny negatives are
    clamped), and return the feasible solution of least variance.
    """
    if table.n_resources > MAX_ORACLE_RESOURCES:
        raise TooLarge(
            f"linear oracle handles at most {MAX_ORACLE_RESOURCES} "
            f"resources, got {table.n_resources}"
        )
    if table.n_rows > MAX_ORACLE_ROWS:
        raise TooLarge(
            f"linear oracle handles at most {MAX_ORACLE_ROWS} rows, "
            f"got {table.n_rows}"
        )
    f = table.mass
    homogeneous = table.homogeneous_demands()
    d = homogeneous.shape[1]
    target_y = table.revenue - float(np.dot(f, table.revenue
                                            - table.starting_price))
    mean_demand = f @ homogeneous
    mean_excess = float(np.dot(f, target_y))
    constraint_scale = max(1.0, abs(mean_excess))

    best: tuple[float, np.ndarray, float] | None = None
    patterns = 0
    for pinned in itertools.product((False, True), repeat=d):
        patterns += 1
        free = ~np.array(pinned)
        coeffs = np.zeros(d)
        if free.any():
            cols = homogeneous[:, free]
            gram = (cols * f[:, None]).T @ cols
            moment = cols.T @ (f * target_y)
            constraint = mean_demand[free]
            k = int(free.sum())
            system = np.zeros((k + 1, k + 1))
            system[:k, :k] = 2.0 * gram
            system[:k, k] = constraint
            system[k, :k] = constraint
            rhs = np.append(2.0 * moment, mean_excess)
            solution, _, _, _ = np.linalg.lstsq(system, rhs, rcond=None)
            coeffs[free] = solution[:k]
        gap = abs(float(coeffs @ mean_demand) - mean_excess)
        if gap > 1e-9 * constraint_scale:
            continue
        if (coeffs < -ACTIVE_SET_FEASIBILITY_SLACK).any():
            continue
        coeffs = np.maximum(coeffs, 0.0)
        prices = homogeneous @ coeffs
        variance = float(np.dot(f, (target_y - prices) ** 2))
        if best is None or variance < best[0]:
            best = (variance, coeffs,
                    abs(float(coeffs @ mean_demand) - mean_excess))
    if best is None:
        raise TooLarge(
            "no sign pattern yields a fair non-negative linear function"
        )
    variance, coeffs, residual = best
    return LinearOracleResult(
        coefficients=coeffs,
        variance=variance,
        fairness_residual=residual,
        patterns_checked=patterns,
    )


def check_incentive(table: ScenarioTable, misreport,
                    scheme: str) -> tuple[float, float]:
    """Squared profit deviation, truthful versus misreported revenue.

    Prices a copy of the table whose revenue column is replaced by the
    misreport, then scores both price functions against the *true*
    revenues.  For the linear scheme the comparison is meaningful when the
    starting price is itself a non-negative linear function of demand.

    Returns ``(truthful_moment, misreported_moment)``.
    """
    if scheme not in ("waterlevel", "linear"):
        raise ValueError(f"unknown scheme {scheme!r}")
    reported = np.asarray(misreport, dtype=float)
    if reported.shape != (table.n_rows,):
        raise DimensionMismatch(
            f"misreport must have shape ({table.n_rows},), "
            f"got {reported.shape}"
        )
    if not np.isfinite(reported).all():
        raise ValueError("misreported revenues must be finite")
    shadow = ScenarioTable(table.demands, table.mass,
                           table.starting_price, reported)
    if scheme == "waterlevel":
        truthful_prices = waterlevel_pricing(table).prices
        misreport_prices = waterlevel_pricing(shadow).prices
    else:
        truthful_prices = linear_pricing(table).evaluate(table.demands)
        misreport_prices = linear_pricing(shadow).evaluate(table.demands)

    def second_moment(prices: np.ndarray) -> float:
        profit = table.revenue - prices
        mean = float(np.dot(table.mass, profit))
        return float(np.dot(table.mass, (profit - mean) ** 2))

    return second_moment(truthful_prices), second_moment(misreport_prices)


def sample_misreports(table: ScenarioTable, count: int,
                      rng: np.random.Generator, *,
                      keep_waterlevel_feasible: bool = True) -> np.ndarray:
    """Random revenue misreports, shape (count, N).

    Mixes multiplicative and additive noise around the true revenues.  When
    ``keep_waterlevel_feasible`` is set, candidates that would make the
    non-negative level infeasible are redrawn (with a deterministic upward
    fallback after too many rejections).
    """
    v = table.revenue
    f = table.mass
    target = expected_starting_price(table)
    spread = 0.75 * (1.0 + np.abs(v))
    out = np.empty((count, table.n_rows))
    for i in range(count):
        candidate = None
        for _ in range(64):
            trial = v * rng.uniform(0.25, 1.75, v.shape) \
                + rng.uniform(-1.0, 1.0, v.shape) * spread * 0.25
            if not keep_waterlevel_feasible:
                candidate = trial
                break
            if float(np.dot(f, np.maximum(trial, 0.0))) >= target:
                candidate = trial
                break
        if candidate is None:
            # Deterministic feasible fallback: inflate everything.
            candidate = np.maximum(v, 0.0) + target + 1.0
        out[i] = candidate
    return out


def fair_pairwise_perturbations(prices, mass, delta: float):
    """Yield fairness-preserving pairwise perturbations of a price vector.

    For every ordered pair of rows (i, j) with both prices positive, raise
    ``p_i`` by ``delta`` and lower ``p_j`` by ``delta * f_i / f_j``; the
    expected price is unchanged.  Pairs that would push ``p_j`` negative
    are skipped.
    """
    p = np.asarray(prices, dtype=float)
    f = np.asarray(mass, dtype=float)
    n = p.shape[0]
    for i in range(n):
        if p[i] <= 0.0:
            continue
        for j in range(n):
            if j == i or p[j] <= 0.0:
                continue
            give_back = delta * f[i] / f[j]
            if p[j] - give_back < 0.0:
                continue
            perturbed = p.copy()
            perturbed[i] += delta
            perturbed[j] -= give_back
            yield i, j, perturbed


def _as_row_prices(table: ScenarioTable, price) -> np.ndarray:
    if isinstance(price, TabulatedPriceFunction):
        arr = np.asarray(price.prices, dtype=float)
    elif isinstance(price, LinearPriceFunction):
        arr = np.asarray(price.evaluate(table.demands), dtype=float)
    elif np.isscalar(price):
        arr = np.full(table.n_rows, float(price))
    else:
        arr = np.asarray(price, dtype=float)
    if arr.shape != (table.n_rows,):
        raise DimensionMismatch(
            f"price must resolve to shape ({table.n_rows},), "
            f"got {arr.shape}"
        )
    if not np.isfinite(arr).all():
        raise ValueError("prices must be finite")
    return arr


def simulate_profits(table: ScenarioTable, price,
                     config: SimulationConfig) -> SimulationReport:
    """Play the priced service forward with a seeded generator.

    Episodes are simulated in fixed-size blocks, each block drawing from a
    generator derived from ``(seed, block_index)``; results therefore do
    not depend on how blocks are distributed over workers, and identical
    configurations reproduce bit-identical reports.

    ``price`` may be a per-row vector, a ``TabulatedPriceFunction``, a
    ``LinearPriceFunction``, or a scalar flat price.
    """
    prices = _as_row_prices(table, price)
    profit = table.revenue - prices
    cumulative_mass = np.cumsum(table.mass)
    cumulative_mass[-1] = 1.0

    draws = config.draws
    episodes = config.episodes
    block = max(1, min(_MAX_EPISODE_BLOCK,
                       _EPISODE_BLOCK_ELEMENTS // draws))
    total_draws = 0
    profit_sum = 0.0
    profit_sq_sum = 0.0
    revenue_sum = 0.0
    revenue_sq_sum = 0.0
    observed_min = np.inf
    ruined = 0

    start = 0
    block_index = 0
    while start < episodes:
        count = min(block, episodes - start)
        rng = np.random.default_rng((config.seed, block_index))
        uniforms = rng.random((count, draws))
        idx = np.searchsorted(cumulative_mass, uniforms, side="right")
        np.clip(idx, 0, table.n_rows - 1, out=idx)
        block_profit = profit[idx]
        capital = config.budget + np.cumsum(block_profit, axis=1)
        ruined += int(np.count_nonzero((capital < 0.0).any(axis=1)))
        block_prices = prices[idx]
        total_draws += count * draws
        profit_sum += float(block_profit.sum())
        profit_sq_sum += float((block_profit ** 2).sum())
        revenue_sum += float(block_prices.sum())
        revenue_sq_sum += float((block_prices ** 2).sum())
        observed_min = min(observed_min, float(block_profit.min()))
        start += count
        block_index += 1

    mean = profit_sum / total_draws
    variance = max(profit_sq_sum / total_draws - mean * mean, 0.0)
    revenue_mean = revenue_sum / total_draws
    revenue_variance = max(
        revenue_sq_sum / total_draws - revenue_mean * revenue_mean, 0.0)
    return SimulationReport(
        draws=draws,
        episodes=episodes,
        seed=config.seed,
        budget=config.budget,
        mean_profit=mean,
        profit_variance=variance,
        min_profit=observed_min,
        ruin_probability=ruined / episodes,
        provider_revenue_mean=revenue_mean,
        provider_revenue_variance=revenue_variance,
    )
