import numpy as np
import pytest

from steadyprice import (
    DimensionMismatch,
    LsProblem,
    NonConvergence,
    kkt_residual,
    nnls_solve,
)

N_RANDOM_PROBLEMS = 300
GRID_STEP = 1e-2
GRID_SLACK = 1e-7


def random_problem(rng, n=None, d=None) -> LsProblem:
    n = n or int(rng.integers(1, 51))
    d = d or int(rng.integers(1, 7))
    return LsProblem(rng.normal(size=(n, d)), rng.normal(size=n))


def grid_best_objective(problem: LsProblem, box: float) -> float:
    """Smallest ||Xa - y||^2 over the non-negative grid, step GRID_STEP."""
    x = problem.design
    y = problem.target
    d = x.shape[1]
    gram = x.T @ x
    lin = x.T @ y
    const = float(y @ y)
    axis = np.arange(0.0, box + 0.5 * GRID_STEP, GRID_STEP)
    if d == 1:
        pts = axis[:, None]
        return float(np.min(np.einsum("pi,ij,pj->p", pts, gram, pts)
                            - 2.0 * pts @ lin + const))
    tail = np.stack([g.ravel() for g in
                     np.meshgrid(*([axis] * (d - 1)), indexing="ij")], axis=1)
    tail_quad = np.einsum("pi,ij,pj->p", tail, gram[1:, 1:], tail)
    tail_lin = tail @ lin[1:]
    cross = tail @ gram[0, 1:]
    best = np.inf
    for a0 in axis:
        vals = (gram[0, 0] * a0 * a0 + 2.0 * a0 * cross + tail_quad
                - 2.0 * (a0 * lin[0] + tail_lin) + const)
        best = min(best, float(vals.min()))
    return best


class TestGoldens:
    def test_identity_clamps_negative_target(self):
        sol = nnls_solve(LsProblem(np.eye(2), [3.0, -1.0]))
        assert sol.coefficients == pytest.approx([3.0, 0.0], abs=1e-12)
        assert sol.kkt_violation <= 1e-12

    def test_single_column_interior(self):
        sol = nnls_solve(LsProblem([[1.0], [1.0]], [1.0, 3.0]))
        assert sol.coefficients == pytest.approx([2.0], abs=1e-12)

    def test_single_column_pinned_at_zero(self):
        sol = nnls_solve(LsProblem([[1.0], [2.0]], [-1.0, -2.0]))
        assert sol.coefficients == pytest.approx([0.0], abs=0)
        assert sol.residual_norm_sq == pytest.approx(5.0, rel=1e-12)


class TestKktResidual:
    def test_zero_at_verified_optimum(self):
        problem = LsProblem(np.eye(2), [3.0, -1.0])
        assert kkt_residual(problem, [3.0, 0.0]) <= 1e-12

    def test_gradient_magnitude_at_origin(self):
        problem = LsProblem([[1.0], [1.0]], [1.0, 3.0])
        assert kkt_residual(problem, [0.0]) == pytest.approx(4.0, rel=1e-12)

    def test_rejects_wrong_length(self):
        with pytest.raises(DimensionMismatch):
            kkt_residual(LsProblem(np.eye(2), [1.0, 1.0]), [1.0])

    def test_solver_output_meets_certificate(self, rng):
        for _ in range(N_RANDOM_PROBLEMS):
            problem = random_problem(rng)
            sol = nnls_solve(problem)
            bound = 1e-10 * (float(np.abs(problem.design.T
                                          @ problem.target).max()) + 1.0)
            assert sol.kkt_violation <= bound
            assert kkt_residual(problem, sol.coefficients) == pytest.approx(
                sol.kkt_violation, rel=1e-9, abs=1e-300)


class TestSolutionInvariants:
    def test_coefficients_nonnegative_exactly(self, rng):
        for _ in range(50):
            sol = nnls_solve(random_problem(rng))
            assert (sol.coefficients >= 0.0).all()

    def test_residual_norm_matches_recomputation(self, rng):
        for _ in range(50):
            problem = random_problem(rng)
            sol = nnls_solve(problem)
            direct = float(np.sum((problem.design @ sol.coefficients
                                   - problem.target) ** 2))
            assert sol.residual_norm_sq == pytest.approx(direct, rel=1e-9,
                                                         abs=1e-300)

    def test_interior_matches_unconstrained(self, rng):
        found = 0
        while found < 40:
            problem = random_problem(rng, n=int(rng.integers(8, 40)))
            free = np.linalg.lstsq(problem.design, problem.target,
                                   rcond=None)[0]
            if (free <= 1e-6).any():
                continue
            found += 1
            sol = nnls_solve(problem)
            assert sol.coefficients == pytest.approx(free, rel=1e-8)

    def test_scaling_equivariance(self, rng):
        for _ in range(25):
            problem = random_problem(rng)
            c = float(rng.uniform(0.1, 50.0))
            base = nnls_solve(problem).coefficients
            scaled = nnls_solve(
                LsProblem(problem.design, c * problem.target)).coefficients
            assert scaled == pytest.approx(c * base, rel=1e-9, abs=1e-12)

    def test_deterministic(self, rng):
        problem = random_problem(rng)
        first = nnls_solve(problem)
        second = nnls_solve(problem)
        assert (first.coefficients == second.coefficients).all()
        assert first.iterations == second.iterations

    def test_rank_deficient_columns(self):
        problem = LsProblem([[1.0, 1.0], [1.0, 1.0]], [2.0, 2.0])
        sol = nnls_solve(problem)
        assert sol.residual_norm_sq <= 1e-18
        assert sol.kkt_violation <= 1e-10


class TestGridOptimality:
    def test_never_beaten_by_fine_grid(self, rng):
        for _ in range(12):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(d, 12))
            design = rng.normal(size=(n, d))
            truth = rng.uniform(0.0, 0.8, size=d)
            target = design @ truth + 0.1 * rng.normal(size=n)
            problem = LsProblem(design, target)
            sol = nnls_solve(problem)
            box = float(sol.coefficients.max()) + 0.5
            assert sol.residual_norm_sq <= grid_best_objective(
                problem, box) + GRID_SLACK


class TestMixedMagnitudeRows:
    def test_heavy_row_does_not_mask_useful_coordinate(self):
        # One row carrying a large penalty weight must not freeze the
        # active-set iteration at the first coordinate it pulls in.
        root_half = np.sqrt(0.5)
        for weight in (1e3, 1e5, 3e5):
            design = np.array([
                [root_half, root_half],
                [root_half, 0.0],
                [weight, 0.5 * weight],
            ])
            target = np.array([2.5 * root_half, -0.5 * root_half, weight])
            sol = nnls_solve(LsProblem(design, target))
            assert sol.coefficients == pytest.approx([0.0, 2.0], abs=1e-5)


class TestFailureModes:
    def test_rejects_nonpositive_tolerance(self):
        with pytest.raises(ValueError):
            nnls_solve(LsProblem(np.eye(2), [1.0, 1.0]), tolerance=0.0)

    def test_iteration_cap_attaches_partial_solution(self):
        problem = LsProblem(np.eye(2), [3.0, 1.0])
        with pytest.raises(NonConvergence) as err:
            nnls_solve(problem, max_iterations=1)
        partial = err.value.solution
        assert partial is not None
        assert (partial.coefficients >= 0.0).all()
        assert partial.kkt_violation > 0.0

    def test_problem_validation(self):
        with pytest.raises(DimensionMismatch):
            LsProblem(np.ones((2, 2)), [1.0])
        with pytest.raises(DimensionMismatch):
            LsProblem(np.ones(3), [1.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            LsProblem([[np.inf]], [1.0])
