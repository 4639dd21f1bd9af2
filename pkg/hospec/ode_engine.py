import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import LinAlgError, expm, solve_banded

from hospec import settings
from hospec.errors import (
    LaurentConvergenceError,
    OperatorError,
    PoleProximityError,
    PropagationError,
)
from hospec.operator_core import ProblemDefinition
from hospec.utils.logger import log

GAUSS_OFFSET = math.sqrt(3) / 6
COMMUTATOR_WEIGHT = math.sqrt(3) / 12


@dataclass(frozen=True)
class ScaledComplex:
    """A complex number (or array) stored as mantissa * exp(log_scale)."""

    mantissa: np.ndarray
    log_scale: np.ndarray

    @property
    def value(self):
        return self.mantissa * np.exp(self.log_scale)

    def ratio(self, other: "ScaledComplex"):
        return self.mantissa / other.mantissa * np.exp(self.log_scale - other.log_scale)

    def __getitem__(self, index) -> "ScaledComplex":
        return ScaledComplex(self.mantissa[index], self.log_scale[index])


def substep_count(problem: ProblemDefinition, lams: np.ndarray) -> int:
    rho = float(np.max(np.abs(lams))) ** (1.0 / problem.order) if len(lams) else 0.0
    step = problem.grid[1] - problem.grid[0]
    return max(1, math.ceil(rho * step / settings.magnus_max_phase))


def step_propagators(problem: ProblemDefinition, lams) -> np.ndarray:
    """Fourth-order Magnus propagators over every grid cell.

    Returns an array of shape (len(lams), M, n, n). Cells are refined so that
    |lambda|^{1/n} h stays below the configured phase bound.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    n = problem.order
    grid = problem.grid
    cells = len(grid) - 1
    substeps = substep_count(problem, lams)
    if substeps > 1:
        log("debug", f"Refining every cell into {substeps} Magnus steps.")
    h =(grid[1] - grid[0]) / substeps
    starts = grid[0] + h * np.arange(cells * substeps)

    first = problem.matrix.evaluate(starts + (0.5 - GAUSS_OFFSET) * h)
    second = problem.matrix.evaluate(starts + (0.5 + GAUSS_OFFSET) * h)
    spectral = np.zeros((len(lams), 1, n, n), dtype=complex)
    spectral[:, 0, n - 1, 0] = problem.spectral_sign * lams
    a1 = first[None] + spectral
    a2 = second[None] + spectral

    omega = 0.5 * h * (a1 + a2) + COMMUTATOR_WEIGHT * h**2 * (a2 @ a1 - a1 @ a2)
    steps = expm(omega).reshape(len(lams), cells, substeps, n, n)
    propagators = steps[:, :, 0]
    for j in range(1, substeps):
        propagators = steps[:, :, j] @ propagators
    if not np.all(np.isfinite(propagators)):
        raise PropagationError("Non-finite propagator, the spectral parameter is too large for this grid.")
    return propagators


@dataclass(frozen=True, eq=False)
class FundamentalSolution:
    """C(x, lambda) on the grid with C(0) = U_0^{-1}.

    The true solution is values[i] scaled column-wise by exp(log_scale[i]).
    log_det is log det C(x_i) computed from the triangular factors.
    """

    lam: complex
    grid: np.ndarray
    values: np.ndarray
    log_scale: np.ndarray
    log_det: np.ndarray

    def unscaled(self, index: int) -> np.ndarray:
        return self.values[index] * np.exp(self.log_scale[index])[None, :]

    def determinant_drift(self) -> float:
        return float(np.max(np.abs(np.exp(self.log_det - self.log_det[0]) - 1.0)))


def integrate_fundamental(problem: ProblemDefinition, lam: complex) -> FundamentalSolution:
    propagators = step_propagators(problem, [lam])[0]
    cells, n = propagators.shape[0], problem.order

    initial = np.linalg.inv(problem.boundary.u0).astype(complex)
    basis, factor = np.linalg.qr(initial)
    norms = np.linalg.norm(factor, axis=0)
    factor = factor / norms
    scales = np.log(norms)

    values = np.empty((cells + 1, n, n), dtype=complex)
    log_scale = np.empty((cells + 1, n))
    log_det = np.empty(cells + 1, dtype=complex)

    def record(index):
        values[index] = basis @ factor
        log_scale[index] = scales
        log_det[index] = (
            np.log(np.linalg.det(basis))
            + np.sum(np.log(np.diag(factor).astype(complex)))
            + np.sum(scales)
        )

    record(0)
    for i in range(cells):
        basis, step_factor = np.linalg.qr(propagators[i] @ basis)
        factor = step_factor @ factor
        norms = np.linalg.norm(factor, axis=0)
        factor = factor / norms
        scales = scales + np.log(norms)
        record(i + 1)

    if not np.all(np.isfinite(values)):
        raise PropagationError(f"Fundamental solution overflowed at lambda = {lam}.")
    return FundamentalSolution(complex(lam), problem.grid, values, log_scale, log_det)


@lru_cache(maxsize=None)
def column_subsets(order: int, size: int) -> tuple:
    return tuple(itertools.combinations(range(order), size))


def compound_matrices(matrices: np.ndarray, size: int) -> np.ndarray:
    """size-th exterior powers of a stack of n x n matrices."""
    subsets = np.array(column_subsets(matrices.shape[-1], size))
    blocks = matrices[..., subsets[:, None, :, None], subsets[None, :, None, :]]
    return np.linalg.det(blocks)


def minor_columns(order: int, j: int, k: int) -> tuple[tuple, float]:
    """0-based columns and sign of the minor Delta_{j,k} (1-based j, k)."""
    if not 1 <= k <= j <= order:
        raise OperatorError(f"Minor indices must satisfy 1 <= k <= j <= n, got ({j}, {k}).")
    if j == k:
        return tuple(range(k, order)), 1.0
    columns = sorted((set(range(k + 1, order + 1)) - {j}) | {k})
    return tuple(c - 1 for c in columns), float((-1) ** (j - k - 1))


def characteristic_minors(
    problem: ProblemDefinition, lams, pairs, propagators: np.ndarray = None
) -> dict:
    """Delta_{j,k}(lambda) for every requested (j, k) over a batch of lambdas.

    The m-th exterior power of C(1) is obtained by propagating the compound of
    U_0^{-1} restricted to the minor's columns, renormalizing every step, so the
    result keeps its accuracy when the columns of C grow at different rates.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    n = problem.order
    if propagators is None:
        propagators = step_propagators(problem, lams)
    initial = np.linalg.inv(problem.boundary.u0)
    u1 = problem.boundary.u1

    by_size = {}
    for j, k in pairs:
        columns, sign = minor_columns(n, j, k)
        by_size.setdefault(n - k, []).append(((j, k), columns, sign))

    minors = {}
    for size, group in sorted(by_size.items()):
        if size == 0:
            for key, _, _ in group:
                minors[key] = ScaledComplex(np.ones(len(lams), dtype=complex), np.zeros(len(lams)))
            continue
        subsets = column_subsets(n, size)
        start = np.array(
            [
                [np.linalg.det(initial[np.ix_(subset, columns)]) for _, columns, _ in group]
                for subset in subsets
            ],
            dtype=complex,
        )
        vectors = np.broadcast_to(start, (len(lams),) + start.shape).copy()
        log_scale = np.zeros((len(lams), len(group)))
        compounds = compound_matrices(propagators, size)
        for i in range(compounds.shape[1]):
            vectors = compounds[:, i] @ vectors
            norms = np.max(np.abs(vectors), axis=1)
            norms = np.where(norms > 0, norms, 1.0)
            vectors /= norms[:, None, :]
            log_scale += np.log(norms)

        for index, (key, _, sign) in enumerate(group):
            rows = list(range(key[1], n))
            forms = np.array([np.linalg.det(u1[np.ix_(rows, subset)]) for subset in subsets])
            minors[key] = ScaledComplex(sign * (vectors[:, :, index] @ forms), log_scale[:, index].copy())
    return minors


def char_minor(problem: ProblemDefinition, j: int, k: int, lam: complex) -> ScaledComplex:
    return characteristic_minors(problem, [lam], [(j, k)])[(j, k)][0]


def weyl_pairs(order: int) -> list:
    return [(j, k) for k in range(1, order) for j in range(k, order + 1)]


def weyl_matrices(problem: ProblemDefinition, lams, check_poles: bool = True) -> np.ndarray:
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    n = problem.order
    minors = characteristic_minors(problem, lams, weyl_pairs(n))
    matrices = np.zeros((len(lams), n, n), dtype=complex)
    matrices[:, np.arange(n), np.arange(n)] = 1.0
    for k in range(1, n):
        diagonal = minors[(k, k)]
        if check_poles and np.any(np.abs(diagonal.mantissa) < settings.pole_threshold):
            raise PoleProximityError(
                f"lambda is within the pole threshold of an eigenvalue of column {k}."
            )
        for j in range(k + 1, n + 1):
            matrices[:, j - 1, k - 1] = -minors[(j, k)].ratio(diagonal)
    return matrices


def weyl_matrix(problem: ProblemDefinition, lam: complex) -> np.ndarray:
    return weyl_matrices(problem, [lam])[0]


def _banded_index(upper: int, rows, cols):
    return upper + rows - cols, cols


def solve_weyl_column(u0: np.ndarray, u1: np.ndarray, propagators: np.ndarray, k: int) -> np.ndarray:
    """Multiple-shooting solve for the k-th Weyl solution (1-based k).

    Unknowns are the quasi-derivative vectors at every node. Rows: the first k
    boundary forms at 0, one continuity block per cell, then the remaining
    n - k forms at 1. The system is banded with (k+n-1, 2n-1-k) bandwidths.
    """
    n = u0.shape[0]
    cells = propagators.shape[0]
    size = n * (cells + 1)
    lower, upper = k + n - 1, 2 * n - 1 - k
    banded = np.zeros((lower + upper + 1, size), dtype=complex)

    rows = np.repeat(np.arange(k), n)
    cols = np.tile(np.arange(n), k)
    banded[_banded_index(upper, rows, cols)] = u0[:k].ravel()

    cell = np.arange(cells)[:, None, None]
    r = np.arange(n)[None, :, None]
    c = np.arange(n)[None, None, :]
    rows = np.broadcast_to(k + cell * n + r, propagators.shape)
    cols = np.broadcast_to(cell * n + c, propagators.shape)
    banded[_banded_index(upper, rows, cols)] = -propagators
    rows = k + np.arange(cells)[:, None] * n + np.arange(n)[None, :]
    banded[_banded_index(upper, rows, rows - k + n)] = 1.0

    rows = np.repeat(k + n * cells + np.arange(n - k), n)
    cols = np.tile(n * cells + np.arange(n), n - k)
    banded[_banded_index(upper, rows, cols)] = u1[k:].ravel()

    rhs = np.zeros(size, dtype=complex)
    rhs[k - 1] = 1.0
    try:
        solution = solve_banded((lower, upper), banded, rhs)
    except (LinAlgError, ValueError) as e:
        raise PoleProximityError(f"Weyl boundary value problem is singular: {e}")
    if not np.all(np.isfinite(solution)):
        raise PoleProximityError("Weyl boundary value problem is singular.")
    return solution.reshape(cells + 1, n)


def weyl_fields(problem: ProblemDefinition, lams, propagators: np.ndarray = None) -> np.ndarray:
    """Weyl solutions Phi(x, lambda) on the grid, shape (len(lams), M+1, n, n).

    values[., i, r, k] is the r-th quasi-derivative of Phi_{k+1} at x_i.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    if propagators is None:
        propagators = step_propagators(problem, lams)
    n = problem.order
    fields = np.empty((len(lams), len(problem.grid), n, n), dtype=complex)
    u0 = problem.boundary.u0.astype(complex)
    u1 = problem.boundary.u1.astype(complex)
    for index in range(len(lams)):
        for k in range(1, n + 1):
            fields[index, :, :, k - 1] = solve_weyl_column(u0, u1, propagators[index], k)
    return fields


@dataclass(frozen=True, eq=False)
class WeylField:
    lam: complex
    grid: np.ndarray
    values: np.ndarray
    matrix: np.ndarray


def weyl_solutions(problem: ProblemDefinition, lam: complex) -> WeylField:
    propagators = step_propagators(problem, [lam])
    values = weyl_fields(problem, [lam], propagators)[0]
    return WeylField(complex(lam), problem.grid, values, values[0])


def circle_points(center: complex, radius: float, nodes: int, offset: float = 0.0) -> np.ndarray:
    angles = 2 * np.pi * (np.arange(nodes) + offset) / nodes
    return center + radius * np.exp(1j * angles)


def _check_radius(center: complex, radius: float, singularities):
    if singularities is None:
        return
    for point in np.atleast_1d(singularities):
        distance = abs(point - center)
        if 1e-12 * (1 + abs(center)) < distance < 2 * radius:
            raise LaurentConvergenceError(
                f"Contour radius {radius:.3e} exceeds the separation bound to the singularity at {point}."
            )


def _trapezoid_coefficients(samples: np.ndarray, radius: float, orders, angles: np.ndarray) -> dict:
    shape = (len(angles),) + (1,) * (samples.ndim - 1)
    return {
        order: np.mean(samples * np.exp(-1j * order * angles).reshape(shape), axis=0) / radius**order
        for order in orders
    }


def laurent_coefficients(
    sampler,
    center: complex,
    radius: float,
    orders=(0,),
    nodes: int = None,
    check: bool = True,
    singularities=None,
) -> dict:
    """Laurent coefficients of sampler around center by trapezoidal contour quadrature.

    With check=True the node count is doubled and the two estimates compared.
    """
    nodes = nodes or settings.laurent_nodes
    _check_radius(center, radius, singularities)
    angles = 2 * np.pi * np.arange(nodes) / nodes
    samples = np.asarray(sampler(center + radius * np.exp(1j * angles)))
    coefficients = _trapezoid_coefficients(samples, radius, orders, angles)
    if not check:
        return coefficients

    shifted_angles = angles + np.pi / nodes
    shifted = np.asarray(sampler(center + radius * np.exp(1j * shifted_angles)))
    all_angles = np.concatenate([angles, shifted_angles])
    refined = _trapezoid_coefficients(np.concatenate([samples, shifted]), radius, orders, all_angles)
    for order in orders:
        scale = 1.0 + np.max(np.abs(refined[order]))
        if np.max(np.abs(refined[order] - coefficients[order])) > settings.laurent_tolerance * scale:
            raise LaurentConvergenceError(
                f"Laurent coefficient of order {order} did not converge at {center} (radius {radius:.3e})."
            )
    return refined


def laurent_coefficient(
    sampler, center: complex, order: int, radius: float, nodes: int = None, check: bool = True
):
    return laurent_coefficients(sampler, center, radius, (order,), nodes, check)[order]


def scaled_taylor_coefficient(
    sampler,
    center: complex,
    order: int,
    radius: float,
    nodes: int = None,
    degeneracy: float = None,
) -> ScaledComplex:
    """Taylor coefficient of an entire function sampled as ScaledComplex values.

    With degeneracy set, a coefficient that is negligible against the sampled
    magnitudes raises LaurentConvergenceError.
    """
    nodes = nodes or settings.laurent_nodes
    angles = 2 * np.pi * np.arange(nodes) / nodes
    values = sampler(center + radius * np.exp(1j * angles))
    reference = float(np.max(values.log_scale))
    samples = values.mantissa * np.exp(values.log_scale - reference)
    coefficient = np.mean(samples * np.exp(-1j * order * angles)) / radius**order
    if degeneracy is not None:
        magnitude = float(np.max(np.abs(samples)))
        if abs(coefficient) * radius**order <= degeneracy * magnitude:
            raise LaurentConvergenceError(
                f"Taylor coefficient of order {order} vanishes at {center}."
            )
    return ScaledComplex(coefficient, reference)
