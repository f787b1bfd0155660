"""Fair non-negative linear pricing via weighted regression.

The price is an affine function of demand, ``p(r) = a_0 + a_1 r_1 + ...``,
with every coefficient non-negative (index 0 is the intercept, carried as a
homogeneous all-ones demand coordinate).  The coefficients minimize the
mass-weighted squared profit deviation around the fixed mean profit, with
fairness enforced through one large-weight regression row; the weight is
doubled adaptively until the fairness residual is negligible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, FairnessUnreachable
from .nnls import LsProblem, nnls_solve
from .scenario import ScenarioTable, expected_starting_price

BIG_M_CAP = 1e15
# Adaptive stopping target for the fairness residual (relative).
FAIRNESS_TARGET_RTOL = 1e-9
# Hard bound a returned price function must satisfy (relative).
FAIRNESS_ACCEPT_RTOL = 1e-7
# Two consecutive doublings shrinking the residual by less than this factor
# mean the residual floor is not going to zero.
STAGNATION_RATIO = 0.9
# Extra doublings after the residual target is met; each one cuts the
# remaining fairness slack (and the variance deficit it buys) by about 4x,
# which keeps incentive comparisons well clear of their tolerance.
POLISH_DOUBLINGS = 2
# A polished iterate may only replace the incumbent if its variance stays
# within this relative band; a jump means the solve degraded numerically.
POLISH_VARIANCE_BAND = 1e-6


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=float))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LinearPriceFunction:
    """Affine price function with non-negative coefficients.

    ``coefficients[0]`` is the intercept; ``coefficients[1:]`` multiply the
    demand coordinates.  ``achieved_variance`` is the mass-weighted squared
    profit deviation of the fit, ``fairness_residual`` the absolute gap
    between expected price and its fairness target, and ``big_m_used`` the
    final fairness-row weight.
    """

    coefficients: np.ndarray
    achieved_variance: float
    fairness_residual: float
    big_m_used: float

    def __post_init__(self):
        object.__setattr__(self, "coefficients",
                           _readonly(self.coefficients))

    @property
    def n_resources(self) -> int:
        return self.coefficients.shape[0] - 1

    def evaluate(self, demands) -> np.ndarray | float:
        """Price one demand vector (m,) or a stack of them (N, m)."""
        arr = np.asarray(demands, dtype=float)
        single = arr.ndim == 1
        if single:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[1] != self.n_resources:
            raise DimensionMismatch(
                f"demands must have {self.n_resources} coordinates, "
                f"got shape {np.asarray(demands).shape}"
            )
        prices = self.coefficients[0] + arr @ self.coefficients[1:]
        return float(prices[0]) if single else prices


def build_ls_problem(table: ScenarioTable, mu: float,
                     big_m: float) -> LsProblem:
    """Weighted regression encoding of the pricing fit.

    Data rows are the homogeneous demands and centered revenues, each scaled
    by the square root of the row mass, so the squared residual over them is
    exactly the profit variance of the fitted price function.  One extra row
    carries the fairness constraint scaled by ``big_m``.
    """
    mu = float(mu)
    homogeneous = table.homogeneous_demands()
    root_mass = np.sqrt(table.mass)
    data_x = homogeneous * root_mass[:, None]
    data_y = (table.revenue - mu) * root_mass
    mean_demand = table.mass @ homogeneous
    mean_excess = float(np.dot(table.mass, table.revenue - mu))
    design = np.vstack([data_x, big_m * mean_demand])
    target = np.append(data_y, big_m * mean_excess)
    return LsProblem(design, target)


def _solve_adaptive_m(table: ScenarioTable, mu: float, *,
                      nnls_tolerance: float = 1e-10) -> LinearPriceFunction:
    """Fit with the fairness weight doubled until the residual is negligible.

    Split out from ``linear_pricing`` so the unreachable-fairness detector
    can be exercised with an arbitrary profit mean.
    """
    f = table.mass
    homogeneous = table.homogeneous_demands()
    mean_demand = f @ homogeneous
    mean_excess = float(np.dot(f, table.revenue - mu))
    fairness_scale = max(1.0, expected_starting_price(table))
    target = FAIRNESS_TARGET_RTOL * fairness_scale

    big_m = 1e3 * (1.0 + abs(mean_excess)
                   / (1.0 + float(np.linalg.norm(mean_demand))))
    best: tuple[float, np.ndarray, float, float] | None = None
    fair: tuple[float, np.ndarray, float, float] | None = None
    previous = np.inf
    stagnant = 0
    polish_left = POLISH_DOUBLINGS
    while True:
        solution = nnls_solve(build_ls_problem(table, mu, big_m),
                              tolerance=nnls_tolerance)
        coeffs = solution.coefficients
        residual = abs(mean_excess - float(coeffs @ mean_demand))
        deviation = table.revenue - mu - homogeneous @ coeffs
        variance = float(np.dot(f, deviation ** 2))
        iterate = (residual, coeffs, big_m, variance)
        if best is None or residual < best[0]:
            best = iterate
        if residual <= target:
            # Polishing may only tighten the incumbent: residual must not
            # grow, and the variance must stay in band (a jump means the
            # heavier fairness row degraded the solve numerically).
            if fair is None or (residual <= fair[0] and variance <= fair[3]
                                + POLISH_VARIANCE_BAND * (1.0 + fair[3])):
                fair = iterate
            if polish_left == 0 or big_m * 2.0 > BIG_M_CAP:
                break
            polish_left -= 1
            big_m *= 2.0
            continue
        if residual > STAGNATION_RATIO * previous:
            stagnant += 1
            if stagnant >= 2:
                raise FairnessUnreachable(residual, big_m)
        else:
            stagnant = 0
        previous = residual
        big_m *= 2.0
        if big_m > BIG_M_CAP:
            if best[0] <= FAIRNESS_ACCEPT_RTOL * fairness_scale:
                break
            raise FairnessUnreachable(best[0], big_m)

    residual, coeffs, big_m, variance = fair if fair is not None else best
    return LinearPriceFunction(
        coefficients=coeffs,
        achieved_variance=variance,
        fairness_residual=residual,
        big_m_used=big_m,
    )


def linear_pricing(table: ScenarioTable, *,
                   nnls_tolerance: float = 1e-10) -> LinearPriceFunction:
    """Minimum-variance fair non-negative linear price function.

    The profit mean is pinned by fairness to ``E[v - q]`` before fitting, so
    the regression target is the centered revenue and the minimized quantity
    is the profit variance.
    """
    mu = float(np.dot(table.mass, table.revenue - table.starting_price))
    return _solve_adaptive_m(table, mu, nnls_tolerance=nnls_tolerance)


def fairness_residual(table: ScenarioTable,
                      price_function: LinearPriceFunction) -> float:
    """Absolute gap between expected price and expected starting price."""
    if price_function.coefficients.shape[0] != table.n_resources + 1:
        raise DimensionMismatch(
            f"price function has {price_function.coefficients.shape[0]} "
            f"coefficients, table needs {table.n_resources + 1}"
        )
    prices = price_function.evaluate(table.demands)
    return abs(float(np.dot(table.mass, prices))
               - expected_starting_price(table))
