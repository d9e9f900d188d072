"""Affine linear complementarity problems ``0 <= z ⊥ Mz + q >= 0``.

Three solvers share one solution contract:

* :func:`solve_lemke` - complementary pivoting on a dense tableau with a
  lexicographic ratio test; exact and deterministic, used for small instances.
* :func:`solve_fb_newton` - semismooth Newton on the Fischer-Burmeister
  reformulation with diagonal regularization; used for large instances.
* :func:`brute_force_lcp` - enumeration of all complementary bases, a test oracle.

Every solver returns an :class:`LcpSolution` whose status is ``solved`` only if
the residuals reported by :func:`verify_complementarity` are within tolerance.
"""

from __future__ import annotations

import logging
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .exceptions import InvalidInputError, SizeLimitError
from .types import (
    BRUTE_FORCE_MAX_DIM,
    DEFAULT_COMP_TOL,
    DEFAULT_FEAS_TOL,
    DEFAULT_MAX_NEWTON_ITERS,
    DEFAULT_MAX_PIVOTS,
    NEWTON_THRESHOLD,
    PIVOT_TOL,
)
from .validators import (
    validate_positive_int,
    validate_positive_real,
    validate_real,
    validate_square_matrix,
    validate_vector,
)

logger = logging.getLogger(__name__)

Vector = NDArray[np.float64]

_METHODS = ("auto", "lemke", "newton")
_REGULARIZATION_STEPS = (1e-10, 1e-8, 1e-6, 1e-4, 1e-2)


class SolveStatus(str, Enum):
    """Outcome of a complementarity solve."""

    SOLVED = "solved"
    RAY_TERMINATION = "ray_termination"
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances, iteration limits and method selection for the solvers."""

    feas_tol: float = DEFAULT_FEAS_TOL
    comp_tol: float = DEFAULT_COMP_TOL
    max_pivots: int = DEFAULT_MAX_PIVOTS
    max_newton_iters: int = DEFAULT_MAX_NEWTON_ITERS
    fb_smoothing: float = 0.0
    method: str = "auto"
    newton_threshold: int = NEWTON_THRESHOLD

    def __post_init__(self) -> None:
        """Validate fields after initialization."""
        object.__setattr__(self, "feas_tol", validate_positive_real(self.feas_tol, "feas_tol"))
        object.__setattr__(self, "comp_tol", validate_positive_real(self.comp_tol, "comp_tol"))
        object.__setattr__(self, "max_pivots", validate_positive_int(self.max_pivots, "max_pivots"))
        object.__setattr__(
            self,
            "max_newton_iters",
            validate_positive_int(self.max_newton_iters, "max_newton_iters"),
        )
        smoothing = validate_real(self.fb_smoothing, "fb_smoothing")
        if smoothing < 0.0:
            raise InvalidInputError(f"fb_smoothing must be non-negative, got {smoothing}")
        object.__setattr__(self, "fb_smoothing", smoothing)
        if self.method not in _METHODS:
            raise InvalidInputError(f"method must be one of {_METHODS}, got {self.method!r}")
        object.__setattr__(
            self,
            "newton_threshold",
            validate_positive_int(self.newton_threshold, "newton_threshold"),
        )


@dataclass(frozen=True, eq=False)
class LcpProblem:
    """Dense affine complementarity system ``w = m z + q``.

    ``labels`` tie each row to the model condition it came from; the solvers only
    use them to name the worst-offending row in residual reports.
    """

    m: Vector
    q: Vector
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        """Validate, copy and freeze the arrays."""
        m = validate_square_matrix(self.m, "m")
        q = validate_vector(self.q, m.shape[0], "q")
        m.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "q", q)

        labels = tuple(self.labels) if self.labels else tuple(f"row{i}" for i in range(len(q)))
        if len(labels) != len(q):
            raise InvalidInputError(f"labels must have length {len(q)}, got {len(labels)}")
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return int(self.q.shape[0])

    def w(self, z: Vector) -> Vector:
        """Evaluate ``m z + q``."""
        return np.asarray(self.m @ z + self.q, dtype=np.float64)

    def permuted(self, order: Sequence[int]) -> LcpProblem:
        """Return the same system with rows and columns reordered by ``order``."""
        idx = np.asarray(order, dtype=int)
        if sorted(idx.tolist()) != list(range(self.dim)):
            raise InvalidInputError("order must be a permutation of the row indices")
        return LcpProblem(
            m=self.m[np.ix_(idx, idx)],
            q=self.q[idx],
            labels=tuple(self.labels[i] for i in idx),
        )


@dataclass(frozen=True)
class ResidualReport:
    """Feasibility and complementarity residuals of a candidate ``z``."""

    feasibility_residual: float
    complementarity_residual: float
    z_violation: float
    w_violation: float
    worst_row: int | None
    worst_label: str | None
    satisfied: bool


@dataclass(frozen=True, eq=False)
class LcpSolution:
    """Solver output with residuals and termination status."""

    z: Vector
    w: Vector
    complementarity_residual: float
    feasibility_residual: float
    status: SolveStatus
    method: str
    iterations: int = 0
    worst_label: str | None = None
    message: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def solved(self) -> bool:
        return self.status is SolveStatus.SOLVED


def verify_complementarity(
    problem: LcpProblem, z: Any, tol: float = DEFAULT_COMP_TOL
) -> ResidualReport:
    """Compute residuals of ``z`` without modifying anything.

    ``satisfied`` is true when both residuals are at most ``tol``.
    """
    vec = validate_vector(z, problem.dim, "z")
    w = problem.w(vec)

    z_violation = float(max(0.0, -vec.min()))
    w_violation = float(max(0.0, -w.min()))
    products = np.abs(vec * w)
    per_row = np.maximum(np.maximum(-vec, -w), 0.0)
    per_row = np.maximum(per_row, products)

    worst_row: int | None = None
    if per_row.max() > 0.0:
        worst_row = int(np.argmax(per_row))

    feasibility = max(z_violation, w_violation)
    complementarity = float(products.max())
    return ResidualReport(
        feasibility_residual=feasibility,
        complementarity_residual=complementarity,
        z_violation=z_violation,
        w_violation=w_violation,
        worst_row=worst_row,
        worst_label=problem.labels[worst_row] if worst_row is not None else None,
        satisfied=feasibility <= tol and complementarity <= tol,
    )


def _solve_linear(matrix: Vector, rhs: Vector) -> Vector | None:
    """Solve a square system; None if singular, badly conditioned or not finite."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            x = np.asarray(scipy.linalg.solve(matrix, rhs, check_finite=False))
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
            return None
    return x if np.all(np.isfinite(x)) else None


def _basis_solution(problem: LcpProblem, active: Vector, atol: float) -> Vector | None:
    """Solve ``w_J = 0, z_{not J} = 0`` for the index set ``active``."""
    z = np.zeros(problem.dim)
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return z

    sub = problem.m[np.ix_(idx, idx)]
    rhs = -problem.q[idx]
    z_j = _solve_linear(sub, rhs)
    if z_j is None:
        z_j, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
        if not np.all(np.isfinite(z_j)) or not np.allclose(sub @ z_j, rhs, atol=atol, rtol=0.0):
            return None
    z[idx] = z_j
    return z


def _finish(
    problem: LcpProblem,
    z: Vector,
    status: SolveStatus,
    opts: SolverOptions,
    method: str,
    iterations: int,
    message: str = "",
) -> LcpSolution:
    """Clip round-off negatives, compute residuals, and confirm the status."""
    z = np.where((z < 0.0) & (z >= -opts.feas_tol), 0.0, z)
    report = verify_complementarity(problem, z)
    if status is SolveStatus.SOLVED and not (
        report.feasibility_residual <= opts.feas_tol
        and report.complementarity_residual <= opts.comp_tol
    ):
        status = SolveStatus.NUMERICAL_FAILURE
        message = message or (
            f"residuals above tolerance (feasibility {report.feasibility_residual:.3e}, "
            f"complementarity {report.complementarity_residual:.3e})"
        )
    return LcpSolution(
        z=z,
        w=problem.w(z),
        complementarity_residual=report.complementarity_residual,
        feasibility_residual=report.feasibility_residual,
        status=status,
        method=method,
        iterations=iterations,
        worst_label=report.worst_label,
        message=message,
    )


def _polish(problem: LcpProblem, z: Vector, opts: SolverOptions) -> Vector:
    """Re-solve the active set of ``z`` exactly; keep whichever point is better."""
    w = problem.w(z)
    candidate = _basis_solution(problem, z > w, atol=opts.feas_tol)
    if candidate is None or not np.all(np.isfinite(candidate)):
        return z

    before = verify_complementarity(problem, z)
    after = verify_complementarity(problem, candidate)
    better = (
        after.feasibility_residual <= opts.feas_tol
        and after.complementarity_residual <= opts.comp_tol
    ) or (
        max(after.feasibility_residual, after.complementarity_residual)
        < max(before.feasibility_residual, before.complementarity_residual)
    )
    return candidate if better else z


def _lexicographic_row(tableau: Vector, column: Vector, rows: NDArray[np.int64], n: int) -> int:
    """Pick the lexicographically smallest row of ``[rhs, B^-1] / column``."""
    rhs_col = tableau.shape[1] - 1
    keys = [rhs_col, *range(n)]
    candidates = rows
    for key in keys:
        ratios = tableau[candidates, key] / column[candidates]
        best = ratios.min()
        slack = PIVOT_TOL * max(1.0, abs(best))
        candidates = candidates[ratios <= best + slack]
        if candidates.size == 1:
            break
    return int(candidates.min())


def solve_lemke(problem: LcpProblem, opts: SolverOptions | None = None) -> LcpSolution:
    """Solve the LCP with Lemke's complementary pivoting method.

    The covering vector is all ones. Ratio-test ties are broken lexicographically
    on the rows of the basis inverse and finally by row index, so identical inputs
    give bitwise identical pivots. Ray termination means the auxiliary variable
    could not be driven out of the basis.
    """
    opts = opts or SolverOptions()
    n = problem.dim
    if problem.q.min() >= 0.0:
        return _finish(problem, np.zeros(n), SolveStatus.SOLVED, opts, "lemke", 0)

    aux = 2 * n
    tableau = np.zeros((n, 2 * n + 2))
    tableau[:, :n] = np.eye(n)
    tableau[:, n : 2 * n] = -problem.m
    tableau[:, aux] = -1.0
    tableau[:, -1] = problem.q
    basis = np.arange(n)

    def pivot(row: int, col: int) -> None:
        tableau[row] /= tableau[row, col]
        factors = tableau[:, col].copy()
        factors[row] = 0.0
        tableau[:] -= np.outer(factors, tableau[row])

    q_min = problem.q.min()
    row = int(np.flatnonzero(problem.q <= q_min + PIVOT_TOL * max(1.0, abs(q_min)))[0])
    pivot(row, aux)
    leaving = int(basis[row])
    basis[row] = aux
    entering = leaving + n

    for iteration in range(1, opts.max_pivots + 1):
        column = tableau[:, entering]
        eligible = np.flatnonzero(column > PIVOT_TOL)
        if eligible.size == 0:
            logger.info("Lemke ray termination after %d pivots", iteration)
            z = _extract_lemke(tableau, basis, n)
            return _finish(
                problem,
                z,
                SolveStatus.RAY_TERMINATION,
                opts,
                "lemke",
                iteration,
                "secondary ray: no eligible pivot row",
            )

        ratios = tableau[eligible, -1] / column[eligible]
        best = ratios.min()
        ties = eligible[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        aux_rows = ties[basis[ties] == aux]
        if aux_rows.size:
            row = int(aux_rows[0])
        else:
            row = _lexicographic_row(tableau, column, eligible, n)

        pivot(row, entering)
        leaving = int(basis[row])
        basis[row] = entering

        if leaving == aux:
            z = _polish(problem, _extract_lemke(tableau, basis, n), opts)
            logger.debug("Lemke solved %d rows in %d pivots", n, iteration)
            return _finish(problem, z, SolveStatus.SOLVED, opts, "lemke", iteration)

        entering = leaving + n if leaving < n else leaving - n

    z = _extract_lemke(tableau, basis, n)
    logger.warning("Lemke hit the pivot limit (%d)", opts.max_pivots)
    return _finish(
        problem, z, SolveStatus.ITERATION_LIMIT, opts, "lemke", opts.max_pivots, "pivot limit"
    )


def _extract_lemke(tableau: Vector, basis: NDArray[np.int64], n: int) -> Vector:
    z = np.zeros(n)
    for row, var in enumerate(basis):
        if n <= var < 2 * n:
            z[var - n] = tableau[row, -1]
    return z


def _fischer_burmeister(
    a: Vector, b: Vector, smoothing: float
) -> tuple[Vector, Vector, Vector]:
    """Return ``phi(a, b) = sqrt(a^2 + b^2 + 2 eps^2) - a - b`` and its partials."""
    radius = np.sqrt(a * a + b * b + 2.0 * smoothing * smoothing)
    phi = radius - a - b
    kink = radius < 1e-14
    safe = np.where(kink, 1.0, radius)
    da = np.where(kink, 1.0 / math.sqrt(2.0) - 1.0, a / safe - 1.0)
    db = np.where(kink, 1.0 / math.sqrt(2.0) - 1.0, b / safe - 1.0)
    return phi, da, db


def _regularized_newton_step(jacobian: Vector, rhs: Vector) -> Vector | None:
    step = _solve_linear(jacobian, rhs)
    if step is not None:
        return step
    eye = np.eye(jacobian.shape[0])
    for delta in _REGULARIZATION_STEPS:
        step = _solve_linear(jacobian + delta * eye, rhs)
        if step is not None:
            logger.debug("Newton system regularized with delta=%g", delta)
            return step
    return None


def solve_fb_newton(
    problem: LcpProblem, start: Any = None, opts: SolverOptions | None = None
) -> LcpSolution:
    """Solve the LCP by semismooth Newton on the Fischer-Burmeister equation.

    A singular Newton system is retried with growing diagonal shifts; when every
    shift fails the result carries ``numerical_failure``. Steps are globalized by
    an Armijo backtracking search on half the squared residual norm, falling back
    to steepest descent when the Newton direction is not a descent direction.
    """
    opts = opts or SolverOptions()
    n = problem.dim
    z = np.zeros(n) if start is None else validate_vector(start, n, "start")
    smoothing = opts.fb_smoothing
    eye = np.eye(n)

    def merit(point: Vector) -> tuple[float, Vector]:
        value, _, _ = _fischer_burmeister(point, problem.w(point), smoothing)
        return 0.5 * float(value @ value), value

    psi, phi = merit(z)
    for iteration in range(opts.max_newton_iters + 1):
        report = verify_complementarity(problem, z)
        if (
            report.feasibility_residual <= opts.feas_tol
            and report.complementarity_residual <= opts.comp_tol
        ):
            return _finish(problem, z, SolveStatus.SOLVED, opts, "newton", iteration)

        if math.sqrt(2.0 * psi) < 1e-6:
            polished = _polish(problem, z, opts)
            if verify_complementarity(problem, polished).satisfied:
                return _finish(problem, polished, SolveStatus.SOLVED, opts, "newton", iteration)

        if iteration == opts.max_newton_iters:
            break

        _, da, db = _fischer_burmeister(z, problem.w(z), smoothing)
        jacobian = da[:, None] * eye + db[:, None] * problem.m
        step = _regularized_newton_step(jacobian, -phi)
        if step is None:
            logger.warning("Newton system singular after regularization")
            return _finish(
                problem,
                z,
                SolveStatus.NUMERICAL_FAILURE,
                opts,
                "newton",
                iteration,
                "singular Newton system",
            )

        gradient = jacobian.T @ phi
        slope = float(gradient @ step)
        if not math.isfinite(slope) or slope > -1e-12 * float(step @ step):
            step = -gradient
            slope = -float(gradient @ gradient)

        t = 1.0
        while True:
            trial = z + t * step
            trial_psi, trial_phi = merit(trial)
            if math.isfinite(trial_psi) and trial_psi <= psi + 1e-4 * t * slope:
                break
            if t < 1e-12:
                break
            t *= 0.5

        if t < 1e-12 and not (math.isfinite(trial_psi) and trial_psi < psi):
            logger.warning("Newton line search stalled at iteration %d", iteration)
            return _finish(
                problem,
                _polish(problem, z, opts),
                SolveStatus.NUMERICAL_FAILURE,
                opts,
                "newton",
                iteration,
                "line search stalled",
            )
        z, psi, phi = trial, trial_psi, trial_phi

    z = _polish(problem, z, opts)
    if verify_complementarity(problem, z).satisfied:
        return _finish(problem, z, SolveStatus.SOLVED, opts, "newton", opts.max_newton_iters)
    return _finish(
        problem,
        z,
        SolveStatus.ITERATION_LIMIT,
        opts,
        "newton",
        opts.max_newton_iters,
        "iteration limit",
    )


def brute_force_lcp(problem: LcpProblem, opts: SolverOptions | None = None) -> LcpSolution:
    """Enumerate all ``2^d`` complementary bases and return the first valid one.

    Index sets are visited in increasing bitmask order, so ``z = 0`` is tried
    first. When no basis works the status is ``ray_termination``, the status
    Lemke uses for instances without a solution.
    """
    opts = opts or SolverOptions()
    n = problem.dim
    if n > BRUTE_FORCE_MAX_DIM:
        raise SizeLimitError(
            f"brute force enumeration accepts at most {BRUTE_FORCE_MAX_DIM} rows, got {n}"
        )

    for mask in range(2**n):
        active = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        z = _basis_solution(problem, active, atol=opts.feas_tol)
        if z is None:
            continue
        w = problem.w(z)
        if z.min() >= -opts.feas_tol and w.min() >= -opts.feas_tol:
            return _finish(problem, z, SolveStatus.SOLVED, opts, "enumeration", mask)

    return _finish(
        problem,
        np.zeros(n),
        SolveStatus.RAY_TERMINATION,
        opts,
        "enumeration",
        2**n,
        "no complementary basis is feasible",
    )


def solve_lcp(
    problem: LcpProblem, opts: SolverOptions | None = None, start: Any = None
) -> LcpSolution:
    """Dispatch to Lemke or Newton, falling back to the other on failure."""
    opts = opts or SolverOptions()
    if opts.method == "lemke":
        return solve_lemke(problem, opts)
    if opts.method == "newton":
        return solve_fb_newton(problem, start, opts)

    primary, secondary = ("lemke", "newton")
    if problem.dim > opts.newton_threshold:
        primary, secondary = secondary, primary

    def run(method: str) -> LcpSolution:
        if method == "lemke":
            return solve_lemke(problem, opts)
        return solve_fb_newton(problem, start, opts)

    solution = run(primary)
    if solution.solved:
        return solution

    logger.warning(
        "%s returned %s on %d rows; retrying with %s",
        primary,
        solution.status.value,
        problem.dim,
        secondary,
    )
    fallback = run(secondary)
    return fallback if fallback.solved else solution
