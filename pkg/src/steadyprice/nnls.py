"""Non-negative least squares by the classical active-set method."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonConvergence


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=float))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LsProblem:
    """Least-squares data: minimize ``||design @ a - target||_2``."""

    design: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        design = np.asarray(self.design, dtype=float)
        target = np.asarray(self.target, dtype=float)
        if design.ndim != 2 or design.shape[0] < 1 or design.shape[1] < 1:
            raise DimensionMismatch(
                f"design must be a (n, d) matrix with n, d >= 1, "
                f"got shape {design.shape}"
            )
        if target.shape != (design.shape[0],):
            raise DimensionMismatch(
                f"target must have shape ({design.shape[0]},), "
                f"got {target.shape}"
            )
        if not np.isfinite(design).all() or not np.isfinite(target).all():
            raise ValueError("least-squares data must be finite")
        object.__setattr__(self, "design", _readonly(design))
        object.__setattr__(self, "target", _readonly(target))

    @property
    def n_rows(self) -> int:
        return self.design.shape[0]

    @property
    def n_coefficients(self) -> int:
        return self.design.shape[1]

    @property
    def gradient_scale(self) -> float:
        """Scale for relative optimality tests: ``max|X^T y| + 1``.

        Keeps tolerances meaningful when callers inject rows of wildly
        different magnitude (the linear-pricing fairness row does).
        """
        return float(np.abs(self.design.T @ self.target).max()) + 1.0


@dataclass(frozen=True)
class NnlsSolution:
    """Solution of a non-negative least-squares problem.

    ``kkt_violation`` is the first-order optimality residual (see
    ``kkt_residual``); it is zero exactly at the constrained global minimum.
    """

    coefficients: np.ndarray
    residual_norm_sq: float
    kkt_violation: float
    iterations: int

    def __post_init__(self):
        object.__setattr__(self, "coefficients",
                           _readonly(self.coefficients))


def kkt_residual(problem: LsProblem, coefficients) -> float:
    """First-order optimality residual of ``coefficients >= 0``.

    With gradient ``g = X^T (X a - y)`` the residual is::

        max( max_i max(-g_i, 0),  max_{i: a_i > 0} |g_i| )

    i.e. the gradient must be non-negative everywhere and vanish on the
    support.  Zero iff ``a`` is the constrained global minimum.
    """
    a = np.asarray(coefficients, dtype=float)
    if a.shape != (problem.n_coefficients,):
        raise DimensionMismatch(
            f"coefficients must have shape ({problem.n_coefficients},), "
            f"got {a.shape}"
        )
    x = problem.design
    g = x.T @ (x @ a - problem.target)
    worst = float(np.maximum(-g, 0.0).max())
    support = a > 0.0
    if support.any():
        worst = max(worst, float(np.abs(g[support]).max()))
    return worst


def _lstsq(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # Minimum-norm least squares through an orthogonal (SVD) factorization;
    # well-defined on rank-deficient column subsets.
    sol, _, _, _ = np.linalg.lstsq(x, y, rcond=None)
    return sol


def nnls_solve(problem: LsProblem, tolerance: float = 1e-10,
               max_iterations: int | None = None) -> NnlsSolution:
    """Minimize ``||X a - y||_2`` subject to ``a >= 0``.

    Parameters
    ----------
    problem : LsProblem
        Design matrix and target vector.
    tolerance : float
        Relative optimality tolerance.  The solve stops once the KKT
        residual is at most ``tolerance * problem.gradient_scale``.
    max_iterations : int, optional
        Cap on least-squares subproblem solves.  Defaults to
        ``3 * d * max(n, d)``.

    Returns
    -------
    NnlsSolution
        Coefficients (every entry >= 0 exactly), squared residual norm,
        KKT residual and the number of subproblem solves used.

    Raises
    ------
    NonConvergence
        Iteration cap reached, or progress stalled, before the KKT residual
        met the tolerance.  The partial solution is attached.

    Notes
    -----
    Classical active-set iteration: start from ``a = 0``, repeatedly move
    the coordinate with the largest positive dual into the passive set,
    re-solve the unconstrained subproblem on the passive columns, and step
    back along the segment to the feasible boundary whenever the subproblem
    solution leaves the positive orthant.  Ties on the entering dual break
    toward the lowest index, and the data objective never increases from
    one passive set to the next.
    """
    if tolerance <= 0.0:
        raise ValueError("tolerance must be positive")
    x = problem.design
    y = problem.target
    n, d = x.shape
    if max_iterations is None:
        max_iterations = 3 * d * max(n, d)
    scale = problem.gradient_scale
    tol = tolerance * scale
    # Entering threshold: keep pulling coordinates in down to machine-level
    # duals even when the certificate tolerance is loose, so rows of mixed
    # magnitude cannot mask a genuinely useful coordinate.
    enter_tol = min(tol, 64.0 * np.finfo(float).eps * scale)

    a = np.zeros(d)
    passive = np.zeros(d, dtype=bool)
    residual = y.copy()
    dual = x.T @ residual  # negative gradient
    objective = float(np.dot(residual, residual))
    iterations = 0

    def _partial() -> NnlsSolution:
        return NnlsSolution(
            coefficients=np.maximum(a, 0.0),
            residual_norm_sq=float(np.dot(residual, residual)),
            kkt_violation=kkt_residual(problem, np.maximum(a, 0.0)),
            iterations=iterations,
        )

    while True:
        candidates = ~passive & (dual > enter_tol)
        if not candidates.any():
            break
        enter = int(np.argmax(np.where(candidates, dual, -np.inf)))
        passive[enter] = True

        while True:
            if iterations >= max_iterations:
                raise NonConvergence(
                    f"no convergence within {max_iterations} subproblem "
                    f"solves", solution=_partial(),
                )
            iterations += 1
            trial = np.zeros(d)
            if passive.any():
                trial[passive] = _lstsq(x[:, passive], y)
            if not passive.any() or trial[passive].min() > 0.0:
                a = trial
                break
            blocking = passive & (trial <= 0.0)
            gaps = a[blocking] - trial[blocking]
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = np.where(gaps > 0.0, a[blocking] / gaps, 0.0)
            alpha = float(steps.min())
            a = a + alpha * (trial - a)
            drop = passive & (a <= 1e-14 * (1.0 + np.abs(a).max()))
            a[drop] = 0.0
            passive[drop] = False

        residual = y - x @ a
        dual = x.T @ residual
        new_objective = float(np.dot(residual, residual))
        # The subproblem solve cannot make the fit worse.
        assert new_objective <= objective * (1.0 + 1e-9) + 1e-300
        if new_objective >= objective:
            # Rounding stalled the iteration; the final KKT test below
            # decides whether the point reached is good enough.
            objective = new_objective
            break
        objective = new_objective

    a = np.maximum(a, 0.0)
    violation = kkt_residual(problem, a)
    solution = NnlsSolution(
        coefficients=a,
        residual_norm_sq=float(np.dot(residual, residual)),
        kkt_violation=violation,
        iterations=iterations,
    )
    if violation > tol:
        raise NonConvergence(
            f"active-set iteration stalled with KKT residual {violation!r} "
            f"above tolerance {tol!r}", solution=solution,
        )
    return solution
