import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from hospec.errors import OperatorError

COEFFICIENT_CLASSES = (
    "schrodinger-n2",
    "n3-mixed",
    "regular-even",
    "distributional-even",
)

STRUCTURE_TOLERANCE = 1e-12
DISTRIBUTIONAL_MEAN_TOLERANCE = 1e-10


def coefficient_names(order: int, kind: str) -> list[str]:
    match kind:
        case "schrodinger-n2":
            return ["sigma0"]
        case "n3-mixed":
            return ["tau1", "sigma0"]
        case "regular-even":
            return [f"tau{nu}" for nu in range(order - 1)]
        case "distributional-even":
            return [f"sigma{nu}" for nu in range(order - 1)]
    raise OperatorError(f"Unknown coefficient class '{kind}'.", field="class")


def validate_class(order: int, kind: str):
    if order < 2:
        raise OperatorError(f"Operator order must be at least 2, got {order}.", field="n")
    match kind:
        case "schrodinger-n2" if order != 2:
            raise OperatorError("Class schrodinger-n2 requires n = 2.", field="class")
        case "n3-mixed" if order != 3:
            raise OperatorError("Class n3-mixed requires n = 3.", field="class")
        case "regular-even" | "distributional-even" if order % 2:
            raise OperatorError(f"Class {kind} requires an even order.", field="class")
        case _ if kind not in COEFFICIENT_CLASSES:
            raise OperatorError(f"Unknown coefficient class '{kind}'.", field="class")


def is_antiderivative(name: str) -> bool:
    return name.startswith("sigma")


def uniform_grid(grid_points: int) -> np.ndarray:
    if grid_points < 17:
        raise OperatorError(
            f"Grid needs at least 17 nodes, got {grid_points}.", field="grid_points"
        )
    return np.linspace(0.0, 1.0, grid_points)


def quadrature_mean(samples: np.ndarray, grid: np.ndarray) -> float:
    return float(simpson(samples, x=grid))


@dataclass(frozen=True)
class CoefficientSet:
    order: int
    kind: str
    grid: np.ndarray
    values: dict
    normalization: dict = field(default_factory=dict)

    def __post_init__(self):
        validate_class(self.order, self.kind)
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or len(grid) < 17:
            raise OperatorError("Grid needs at least 17 nodes.", field="grid_points")
        steps = np.diff(grid)
        if abs(grid[0]) > 1e-14 or abs(grid[-1] - 1.0) > 1e-14:
            raise OperatorError("Grid must span [0, 1].", field="grid_points")
        if np.max(np.abs(steps - steps[0])) > 1e-12:
            raise OperatorError("Grid must be uniform.", field="grid_points")

        allowed = coefficient_names(self.order, self.kind)
        for name, samples in self.values.items():
            if name not in allowed:
                raise OperatorError(
                    f"Coefficient '{name}' does not belong to class {self.kind}.",
                    field=f"coefficients.{name}",
                )
            if np.shape(samples) != grid.shape:
                raise OperatorError(
                    f"Coefficient '{name}' has {np.size(samples)} samples, grid has {len(grid)}.",
                    field=f"coefficients.{name}",
                )
            if not np.all(np.isfinite(samples)):
                raise OperatorError(
                    f"Coefficient '{name}' has non-finite samples.",
                    field=f"coefficients.{name}",
                )
            if is_antiderivative(name):
                mean = quadrature_mean(samples, grid)
                if abs(mean) > DISTRIBUTIONAL_MEAN_TOLERANCE:
                    raise OperatorError(
                        f"Antiderivative '{name}' has mean {mean:.3e}, expected 0.",
                        field=f"coefficients.{name}",
                    )

    @classmethod
    def from_samples(cls, order: int, kind: str, grid, values: dict) -> "CoefficientSet":
        """Build a set, shifting every antiderivative coefficient to zero mean.

        The subtracted constants are kept in `normalization`.
        """
        grid = np.asarray(grid, dtype=float)
        normalized = {}
        normalization = {}
        for name, samples in values.items():
            samples = np.asarray(samples, dtype=float)
            if is_antiderivative(name) and samples.shape == grid.shape:
                mean = quadrature_mean(samples, grid)
                samples = samples - mean
                normalization[name] = mean
            normalized[name] = samples
        return cls(order, kind, grid, normalized, normalization)

    @classmethod
    def zero(cls, order: int, kind: str, grid) -> "CoefficientSet":
        return cls(order, kind, np.asarray(grid, dtype=float), {})

    @property
    def names(self) -> list[str]:
        return coefficient_names(self.order, self.kind)

    def coefficient(self, name: str) -> np.ndarray:
        if name not in self.names:
            raise OperatorError(f"Coefficient '{name}' does not belong to class {self.kind}.")
        samples = self.values.get(name)
        if samples is None:
            return np.zeros(len(self.grid))
        return np.asarray(samples, dtype=float)

    def means(self) -> dict:
        return {
            name: quadrature_mean(self.coefficient(name), self.grid)
            for name in self.names
            if not is_antiderivative(name)
        }

    def replace(self, values: dict) -> "CoefficientSet":
        merged = {name: self.coefficient(name) for name in self.names}
        merged.update(values)
        return CoefficientSet(self.order, self.kind, self.grid, merged, dict(self.normalization))


def _structure_masks(order: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.indices((order, order))
    return cols == rows + 1, cols > rows + 1


@dataclass(frozen=True, eq=False)
class AssociatedMatrix:
    """Samples of the matrix F(x) defining quasi-derivatives, shape (M+1, n, n)."""

    order: int
    grid: np.ndarray
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        n = self.order
        if entries.shape != (len(self.grid), n, n):
            raise OperatorError(
                f"Matrix samples have shape {entries.shape}, expected {(len(self.grid), n, n)}."
            )
        if not np.all(np.isfinite(entries)):
            raise OperatorError("Matrix samples contain non-finite values.")
        shift, upper = _structure_masks(n)
        if np.any(np.abs(entries[:, shift] - 1.0) > STRUCTURE_TOLERANCE):
            raise OperatorError("Superdiagonal of F must be identically 1.")
        if np.any(np.abs(entries[:, upper]) > STRUCTURE_TOLERANCE):
            raise OperatorError("Entries above the superdiagonal of F must vanish.")
        trace = np.trace(entries, axis1=1, axis2=2)
        if np.max(np.abs(trace)) > STRUCTURE_TOLERANCE:
            raise OperatorError(f"Trace of F must vanish, got {np.max(np.abs(trace)):.3e}.")

    @classmethod
    def from_entries(cls, grid, entries) -> "AssociatedMatrix":
        entries = np.asarray(entries, dtype=float)
        return cls(entries.shape[-1], np.asarray(grid, dtype=float), entries)

    @cached_property
    def spline(self) -> CubicSpline:
        return CubicSpline(self.grid, self.entries, axis=0)

    def evaluate(self, x) -> np.ndarray:
        return self.spline(x)


def associated_matrix(coefficients: CoefficientSet) -> AssociatedMatrix:
    n = coefficients.order
    size = len(coefficients.grid)
    entries = np.zeros((size, n, n))
    for k in range(n - 1):
        entries[:, k, k + 1] = 1.0
    coefficient = coefficients.coefficient

    match coefficients.kind:
        case "schrodinger-n2":
            sigma = coefficient("sigma0")
            entries[:, 0, 0] = sigma
            entries[:, 1, 0] = -(sigma**2)
            entries[:, 1, 1] = -sigma
        case "n3-mixed":
            tau1 = coefficient("tau1")
            sigma0 = coefficient("sigma0")
            entries[:, 1, 0] = -(sigma0 + tau1)
            entries[:, 2, 1] = sigma0 - tau1
        case "regular-even":
            for k in range(n // 2):
                entries[:, n - k - 1, k] = -coefficient(f"tau{2 * k}")
            for k in range(n // 2 - 1):
                entries[:, n - k - 2, k] = -coefficient(f"tau{2 * k + 1}")
                entries[:, n - k - 1, k + 1] = -coefficient(f"tau{2 * k + 1}")
        case "distributional-even":
            _fill_distributional(entries, coefficients)
    return AssociatedMatrix(n, coefficients.grid, entries)


def antiderivative_matrix(coefficients: CoefficientSet) -> np.ndarray:
    """The symmetric-structured matrix Q(x) of size (m+1) x (m+1), m = n/2."""
    n = coefficients.order
    m = n // 2
    q = np.zeros((len(coefficients.grid), m + 1, m + 1))
    for nu in range(n - 1):
        sign = 1.0 if math.floor((nu - 1) / 2) % 2 == 0 else -1.0
        sigma = sign * coefficients.coefficient(f"sigma{nu}")
        if nu % 2 == 0:
            k = nu // 2
            q[:, k, k + 1] += sigma
            q[:, k + 1, k] += sigma
        else:
            k = (nu - 1) // 2
            q[:, k, k + 2] += sigma
            q[:, k + 2, k] -= sigma
    return q


def _fill_distributional(entries: np.ndarray, coefficients: CoefficientSet):
    # 1-based formulas, shifted to 0-based storage.
    m = coefficients.order // 2
    q = antiderivative_matrix(coefficients)
    for j in range(1, m + 1):
        entries[:, m - 1, j - 1] = (-1) ** (m + 1) * q[:, j - 1, m]
    for k in range(m + 1, 2 * m + 1):
        entries[:, k - 1, m] = (-1) ** (k + 1) * q[:, m, 2 * m - k]
        for j in range(1, m + 1):
            entries[:, k - 1, j - 1] = (-1) ** (k + 1) * q[:, j - 1, 2 * m - k] + (
                -1
            ) ** (m + k) * q[:, j - 1, m] * q[:, m, 2 * m - k]


def star_entries(entries: np.ndarray) -> np.ndarray:
    """F* with f*_{k,j} = (-1)^{k+j+1} f_{n-j+1, n-k+1}."""
    n = entries.shape[-1]
    rows, cols = np.indices((n, n))
    sign = np.where((rows + cols) % 2 == 0, -1.0, 1.0)
    return sign * np.swapaxes(entries[:, ::-1, ::-1], 1, 2)


@dataclass(frozen=True, eq=False)
class BoundaryConfig:
    order: int
    p0: tuple
    p1: tuple
    u0: np.ndarray
    u1: np.ndarray

    def __post_init__(self):
        for side, exponents, matrix in (("0", self.p0, self.u0), ("1", self.p1, self.u1)):
            if sorted(exponents) != list(range(self.order)):
                raise OperatorError(
                    f"Boundary exponents p{side} = {list(exponents)} are not a permutation of 0..{self.order - 1}.",
                    field=f"boundary.p{side}",
                )
            matrix = np.asarray(matrix, dtype=float)
            if matrix.shape != (self.order, self.order):
                raise OperatorError(
                    f"U{side} has shape {matrix.shape}, expected {(self.order, self.order)}.",
                    field=f"boundary.U{side}",
                )
            for s, p in enumerate(exponents):
                if abs(matrix[s, p] - 1.0) > STRUCTURE_TOLERANCE or np.any(
                    np.abs(matrix[s, p + 1 :]) > STRUCTURE_TOLERANCE
                ):
                    raise OperatorError(
                        f"Row {s + 1} of U{side} must have 1 at column {p + 1} and zeros after it.",
                        field=f"boundary.U{side}",
                    )
            if abs(np.linalg.det(matrix)) < 1e-12:
                raise OperatorError(f"U{side} is singular.", field=f"boundary.U{side}")

    @classmethod
    def from_exponents(cls, p0, p1, u0=None, u1=None) -> "BoundaryConfig":
        order = len(p0)
        if len(p1) != order:
            raise OperatorError("Boundary exponent lists differ in length.", field="boundary")
        return cls(
            order,
            tuple(int(p) for p in p0),
            tuple(int(p) for p in p1),
            _unit_form(order, p0) if u0 is None else np.asarray(u0, dtype=float),
            _unit_form(order, p1) if u1 is None else np.asarray(u1, dtype=float),
        )

    def matrix(self, side: int) -> np.ndarray:
        return self.u0 if side == 0 else self.u1

    def exponents(self, side: int) -> tuple:
        return self.p0 if side == 0 else self.p1


def _unit_form(order: int, exponents) -> np.ndarray:
    matrix = np.zeros((order, order))
    for s, p in enumerate(exponents):
        if not 0 <= int(p) < order:
            raise OperatorError(f"Boundary exponent {p} out of range.", field="boundary")
        matrix[s, int(p)] = 1.0
    return matrix


def default_boundary(order: int) -> BoundaryConfig:
    return BoundaryConfig.from_exponents(tuple(range(order)), tuple(reversed(range(order))))


def signed_antidiagonal(order: int, signs) -> np.ndarray:
    matrix = np.zeros((order, order))
    for i in range(order):
        matrix[i, order - 1 - i] = signs[i]
    return matrix


def bracket_matrix(order: int) -> np.ndarray:
    return signed_antidiagonal(order, [(-1.0) ** i for i in range(order)])


@dataclass(frozen=True, eq=False)
class ProblemDefinition:
    matrix: AssociatedMatrix
    boundary: BoundaryConfig
    spectral_sign: float = 1.0
    coefficients: CoefficientSet = None

    @property
    def order(self) -> int:
        return self.matrix.order

    @property
    def grid(self) -> np.ndarray:
        return self.matrix.grid

    @cached_property
    def bracket(self) -> np.ndarray:
        return bracket_matrix(self.order)

    def dual_exponents(self, side: int) -> tuple:
        p = self.boundary.exponents(side)
        n = self.order
        return tuple(n - 1 - p[n - 1 - r] for r in range(n))

    def signed_matrix(self, side: int) -> np.ndarray:
        return signed_antidiagonal(
            self.order, [(-1.0) ** p for p in self.dual_exponents(side)]
        )


def build_problem(coefficients: CoefficientSet, boundary: BoundaryConfig) -> ProblemDefinition:
    if boundary.order != coefficients.order:
        raise OperatorError(
            f"Boundary configuration has order {boundary.order}, coefficients have order {coefficients.order}.",
            field="boundary",
        )
    return ProblemDefinition(associated_matrix(coefficients), boundary, 1.0, coefficients)


def dual_boundary_matrix(problem: ProblemDefinition, side: int) -> np.ndarray:
    """U*_a = (J U_a^{-1} J_a^{-1})^T, so that U*_a^T J_a U_a = J."""
    u = problem.boundary.matrix(side)
    dual = (problem.bracket @ np.linalg.inv(u) @ np.linalg.inv(problem.signed_matrix(side))).T
    # Integer structure survives inversion up to rounding.
    snapped = np.round(dual)
    return np.where(np.abs(dual - snapped) < 1e-12, snapped, dual)


def star_problem(problem: ProblemDefinition) -> ProblemDefinition:
    matrix = AssociatedMatrix(
        problem.order, problem.grid, star_entries(problem.matrix.entries)
    )
    boundary = BoundaryConfig(
        problem.order,
        problem.dual_exponents(0),
        problem.dual_exponents(1),
        dual_boundary_matrix(problem, 0),
        dual_boundary_matrix(problem, 1),
    )
    return ProblemDefinition(
        matrix, boundary, problem.spectral_sign * (-1.0) ** problem.order, None
    )


def lagrange_bracket(z, y) -> np.ndarray:
    """<z, y> = sum_j (-1)^j z^{[j]} y^{[n-j-1]} over the last axis."""
    z = np.asarray(z)
    y = np.asarray(y)
    if z.shape[-1] != y.shape[-1]:
        raise OperatorError(
            f"Quasi-derivative vectors have lengths {z.shape[-1]} and {y.shape[-1]}."
        )
    n = z.shape[-1]
    signs = np.array([(-1.0) ** j for j in range(n)])
    return np.sum(signs * z * y[..., ::-1], axis=-1)


def apply_boundary_form(problem: ProblemDefinition, side: int, quasi_derivatives) -> np.ndarray:
    """Boundary forms U_{s,a}(y) for every s, from the quasi-derivative vector at x = a."""
    quasi_derivatives = np.asarray(quasi_derivatives)
    if quasi_derivatives.shape[-1] != problem.order:
        raise OperatorError("Quasi-derivative vector does not match the operator order.")
    return quasi_derivatives @ problem.boundary.matrix(side).T
