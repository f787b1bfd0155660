import numpy as np
import pytest

from steadyprice import (
    DimensionMismatch,
    FairnessUnreachable,
    LinearPriceFunction,
    NonConvergence,
    ScenarioTable,
    build_ls_problem,
    expected_starting_price,
    fairness_residual,
    linear_pricing,
)
from steadyprice.linear_pricing import _solve_adaptive_m
from steadyprice.oracle import brute_force_linear, check_incentive, \
    sample_misreports

from helpers import random_feasible_table

FAIRNESS_BOUND_RTOL = 1e-7
ORACLE_AGREEMENT = 1e-6
INCENTIVE_SLACK = 1e-6


def exact_fit_table() -> ScenarioTable:
    # Revenue is an affine function of demand, so a zero-variance fair
    # non-negative fit exists and is unique.
    demands = [[1.0], [2.0], [3.0]]
    revenue = [3.0, 5.0, 7.0]
    return ScenarioTable(demands, [1 / 3, 1 / 3, 1 / 3],
                         [4.0, 4.0, 4.0], revenue)


class TestBuildLsProblem:
    def test_coin_toss_rows(self, coin_toss):
        problem = build_ls_problem(coin_toss, mu=0.5, big_m=100.0)
        root_half = np.sqrt(0.5)
        assert problem.design.shape == (3, 2)
        assert problem.design[0] == pytest.approx([root_half, root_half])
        assert problem.design[1] == pytest.approx([root_half, 0.0])
        assert problem.target[:2] == pytest.approx(
            [2.5 * root_half, -0.5 * root_half])
        assert problem.design[2] == pytest.approx([100.0, 50.0])
        assert problem.target[2] == pytest.approx(100.0)

    def test_centered_revenue_zeroes_fairness_target(self):
        t = ScenarioTable([[1.0], [2.0]], [0.5, 0.5], [0.0, 0.0], [4.0, 4.0])
        problem = build_ls_problem(t, mu=4.0, big_m=10.0)
        assert problem.target[-1] == 0.0

    def test_single_row(self):
        t = ScenarioTable([[1.0]], [1.0], [3.0], [4.0])
        problem = build_ls_problem(t, mu=1.0, big_m=1.0)
        assert problem.design[0] == pytest.approx([1.0, 1.0])
        assert problem.target[0] == pytest.approx(3.0)
        assert problem.design[1] == pytest.approx([1.0, 1.0])
        assert problem.target[1] == pytest.approx(3.0)


class TestLinearPricing:
    def test_exact_fit_recovered(self):
        fitted = linear_pricing(exact_fit_table())
        assert fitted.coefficients == pytest.approx([0.0, 2.0], abs=1e-6)
        assert fitted.achieved_variance <= 1e-12
        assert fairness_residual(exact_fit_table(), fitted) <= 1e-9

    def test_coin_toss(self, coin_toss):
        fitted = linear_pricing(coin_toss)
        assert fitted.coefficients == pytest.approx([0.0, 2.0], abs=1e-6)
        assert fitted.achieved_variance == pytest.approx(0.25, abs=1e-6)
        assert fairness_residual(coin_toss, fitted) <= 1e-9

    def test_constant_revenue_buys_constant_price(self, rng):
        demands = rng.uniform(0.0, 3.0, size=(4, 2))
        t = ScenarioTable(demands, [0.25] * 4, [2.0] * 4, [7.0] * 4)
        fitted = linear_pricing(t)
        assert fitted.coefficients == pytest.approx([2.0, 0.0, 0.0],
                                                    abs=1e-6)
        assert fitted.achieved_variance <= 1e-12

    def test_coefficients_nonnegative_exactly(self, rng):
        for _ in range(40):
            t = random_feasible_table(rng, n=int(rng.integers(1, 40)),
                                      m=int(rng.integers(1, 4)))
            fitted = linear_pricing(t)
            assert (fitted.coefficients >= 0.0).all()

    def test_fairness_bound_on_random_tables(self, rng):
        for _ in range(100):
            t = random_feasible_table(rng, n=int(rng.integers(1, 200)))
            fitted = linear_pricing(t)
            bound = FAIRNESS_BOUND_RTOL * max(
                1.0, expected_starting_price(t))
            assert fitted.fairness_residual <= bound
            assert fairness_residual(t, fitted) <= bound

    def test_variance_identity(self, rng):
        for _ in range(25):
            t = random_feasible_table(rng, n=int(rng.integers(1, 60)))
            fitted = linear_pricing(t)
            mu = float(t.mass @ (t.revenue - t.starting_price))
            prices = fitted.evaluate(t.demands)
            direct = float(t.mass @ (t.revenue - mu - prices) ** 2)
            assert fitted.achieved_variance == pytest.approx(
                direct, rel=1e-9, abs=1e-300)

    def test_monotone_in_demand(self, rng):
        for _ in range(20):
            t = random_feasible_table(rng, n=int(rng.integers(2, 30)),
                                      m=2)
            fitted = linear_pricing(t)
            lo = rng.uniform(0.0, 2.0, size=2)
            hi = lo + rng.uniform(0.0, 2.0, size=2)
            assert fitted.evaluate(lo) <= fitted.evaluate(hi) + 1e-12

    def test_agrees_with_enumeration_oracle(self, rng):
        for _ in range(60):
            t = random_feasible_table(rng, n=int(rng.integers(1, 7)),
                                      m=int(rng.integers(1, 3)))
            fitted = linear_pricing(t)
            reference = brute_force_linear(t)
            assert abs(fitted.achieved_variance
                       - reference.variance) <= ORACLE_AGREEMENT

    def test_incentive_within_linear_family(self, rng):
        worst = -np.inf
        for trial in range(30):
            t = random_feasible_table(rng, n=int(rng.integers(2, 7)),
                                      m=int(rng.integers(1, 3)),
                                      linear_q=True)
            misreports = sample_misreports(
                t, 20, np.random.default_rng(trial),
                keep_waterlevel_feasible=False)
            for row in misreports:
                truthful, misreported = check_incentive(t, row, "linear")
                worst = max(worst, truthful - misreported)
        assert worst <= INCENTIVE_SLACK

    def test_unreachable_fairness_detected(self, rng):
        # A profit mean above every revenue makes the centered target
        # negative while demands stay non-negative, so no non-negative
        # coefficients can close the gap.
        t = random_feasible_table(rng, n=5, m=2)
        doomed = float(t.revenue.max()) + 5.0
        with pytest.raises(FairnessUnreachable) as err:
            _solve_adaptive_m(t, doomed)
        assert err.value.residual > 0.0
        assert err.value.big_m > 0.0

    def test_non_convergence_propagates(self, rng):
        t = random_feasible_table(rng, n=8, m=2)
        with pytest.raises(NonConvergence):
            linear_pricing(t, nnls_tolerance=1e-300)


class TestLinearPriceFunction:
    def test_evaluate_single_and_stacked(self, coin_toss):
        fitted = linear_pricing(coin_toss)
        single = fitted.evaluate([1.0])
        stacked = fitted.evaluate([[1.0], [0.0]])
        assert isinstance(single, float)
        assert stacked.shape == (2,)
        assert single == pytest.approx(stacked[0])

    def test_evaluate_rejects_wrong_width(self, coin_toss):
        fitted = linear_pricing(coin_toss)
        with pytest.raises(DimensionMismatch):
            fitted.evaluate([1.0, 2.0])

    def test_zero_function_residual_is_target(self, coin_toss):
        zero = LinearPriceFunction(
            coefficients=np.zeros(2), achieved_variance=0.0,
            fairness_residual=1.0, big_m_used=1.0)
        assert fairness_residual(coin_toss, zero) == pytest.approx(1.0)

    def test_residual_op_rejects_wrong_width(self, coin_toss):
        wide = LinearPriceFunction(
            coefficients=np.zeros(3), achieved_variance=0.0,
            fairness_residual=0.0, big_m_used=1.0)
        with pytest.raises(DimensionMismatch):
            fairness_residual(coin_toss, wide)

    def test_reported_residual_matches_recomputation(self, rng):
        for _ in range(20):
            t = random_feasible_table(rng, n=int(rng.integers(1, 50)))
            fitted = linear_pricing(t)
            assert fitted.fairness_residual == pytest.approx(
                fairness_residual(t, fitted), abs=1e-12)
