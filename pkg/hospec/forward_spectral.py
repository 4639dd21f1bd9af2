import math
from dataclasses import dataclass, field

import numpy as np

from hospec import settings
from hospec.errors import (
    ClassWViolation,
    DataMismatchError,
    LaurentConvergenceError,
    OperatorError,
    PoleProximityError,
    RootFindingError,
)
from hospec.ode_engine import (
    ScaledComplex,
    characteristic_minors,
    circle_points,
    laurent_coefficients,
    scaled_taylor_coefficient,
    weyl_matrices,
)
from hospec.operator_core import ProblemDefinition
from hospec.utils.helpers import complex_to_pair, pair_to_complex, parallel_map
from hospec.utils.logger import log

TRIANGULAR_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class SpectralDatum:
    level: int
    column: int
    eigenvalue: complex
    residue: np.ndarray
    kind: str = "subdiagonal"

    @property
    def weight(self) -> complex:
        return complex(self.residue[self.column, self.column - 1])

    def nilpotency_defect(self) -> float:
        scale = np.linalg.norm(self.residue) ** 2
        if scale == 0:
            return 0.0
        return float(np.linalg.norm(self.residue @ self.residue) / scale)

    def to_dict(self) -> dict:
        entry = {"l": self.level, "k": self.column, "lambda": complex_to_pair(self.eigenvalue)}
        if self.kind == "subdiagonal":
            entry["N"] = {"kind": "subdiagonal", "beta": complex_to_pair(self.weight)}
        else:
            entry["N"] = {
                "kind": "full",
                "entries": [[complex_to_pair(value) for value in row] for row in self.residue],
            }
        return entry

    @classmethod
    def from_dict(cls, entry: dict, order: int) -> "SpectralDatum":
        level, column = int(entry["l"]), int(entry["k"])
        residue = np.zeros((order, order), dtype=complex)
        payload = entry["N"]
        match payload.get("kind"):
            case "subdiagonal":
                residue[column, column - 1] = pair_to_complex(payload["beta"])
            case "full":
                residue = np.array(
                    [[pair_to_complex(value) for value in row] for row in payload["entries"]],
                    dtype=complex,
                )
            case other:
                raise DataMismatchError(f"Unknown residue kind '{other}'.", field="data.N.kind")
        return cls(level, column, pair_to_complex(entry["lambda"]), residue, payload["kind"])


def subdiagonal_residue(order: int, column: int, weight: complex) -> np.ndarray:
    residue = np.zeros((order, order), dtype=complex)
    residue[column, column - 1] = weight
    return residue


@dataclass(frozen=True, eq=False)
class SpectralDataSet:
    order: int
    p0: tuple
    p1: tuple
    levels: int
    data: tuple
    chi: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = {(l, k) for l in range(1, self.levels + 1) for k in range(1, self.order)}
        present = [(datum.level, datum.column) for datum in self.data]
        if len(present) != len(set(present)) or set(present) != expected:
            raise DataMismatchError(
                f"Spectral data must hold exactly one entry per level 1..{self.levels} and column 1..{self.order - 1}.",
                field="data",
            )
        for datum in self.data:
            residue = datum.residue
            if residue.shape != (self.order, self.order):
                raise DataMismatchError(f"Residue of ({datum.level}, {datum.column}) has the wrong shape.")
            scale = 1.0 + np.max(np.abs(residue))
            if np.max(np.abs(np.triu(residue))) > TRIANGULAR_TOLERANCE * scale:
                raise DataMismatchError(
                    f"Residue of ({datum.level}, {datum.column}) is not strictly lower triangular.",
                    field="data.N",
                )
        for k in range(1, self.order):
            moduli = np.abs(self.eigenvalues(k))
            if np.any(np.diff(moduli) < -1e-9 * (1 + moduli[1:])):
                raise DataMismatchError(f"Eigenvalues of column {k} are not sorted by modulus.")

    @property
    def index(self) -> dict:
        return {(datum.level, datum.column): datum for datum in self.data}

    def datum(self, level: int, column: int) -> SpectralDatum:
        return self.index[(level, column)]

    def eigenvalues(self, column: int) -> np.ndarray:
        return np.array([self.datum(l, column).eigenvalue for l in range(1, self.levels + 1)])

    def all_eigenvalues(self) -> np.ndarray:
        return np.array([datum.eigenvalue for datum in self.data])

    def truncated(self, levels: int) -> "SpectralDataSet":
        if levels > self.levels:
            raise DataMismatchError(f"Cannot truncate {self.levels} levels to {levels}.")
        kept = tuple(datum for datum in self.data if datum.level <= levels)
        return SpectralDataSet(self.order, self.p0, self.p1, levels, kept, self.chi, dict(self.metadata))

    def to_dict(self) -> dict:
        return {
            "n": self.order,
            "boundary": {"p0": list(self.p0), "p1": list(self.p1)},
            "L": self.levels,
            "chi": list(self.chi),
            "metadata": self.metadata,
            "data": [
                datum.to_dict()
                for datum in sorted(self.data, key=lambda d: (d.level, d.column))
            ],
        }

    @classmethod
    def from_dict(cls, document: dict) -> "SpectralDataSet":
        try:
            order = int(document["n"])
            boundary = document.get("boundary") or {}
            p0 = tuple(boundary.get("p0", range(order)))
            p1 = tuple(boundary.get("p1", reversed(range(order))))
            data = tuple(SpectralDatum.from_dict(entry, order) for entry in document["data"])
            levels = int(document.get("L", max(datum.level for datum in data)))
        except (KeyError, TypeError, ValueError) as e:
            raise DataMismatchError(f"Malformed spectral data document: {e}", field="data")
        return cls(
            order,
            p0,
            p1,
            levels,
            data,
            tuple(document.get("chi", ())),
            dict(document.get("metadata") or {}),
        )


def seeding_constants(order: int, p0=None, p1=None) -> tuple[tuple, bool]:
    """Offsets chi_k of the eigenvalue asymptotics and whether they are tabulated."""
    default = p0 is None or (
        tuple(p0) == tuple(range(order)) and tuple(p1) == tuple(reversed(range(order)))
    )
    if default and order in settings.chi_table:
        return tuple(settings.chi_table[order]), True
    return tuple(0.0 for _ in range(order - 1)), False


def rho_scale(order: int, column: int) -> float:
    return math.pi / math.sin(math.pi * column / order)


def eigenvalue_predictor(order: int, column: int, level, chi=None):
    """(-1)^{n-k} (pi / sin(pi k / n) (l + chi_k))^n. level may be complex for re-seeding."""
    if chi is None:
        chi, _ = seeding_constants(order)
    rho = rho_scale(order, column) * (level + chi[column - 1])
    return (-1) ** (order - column) * rho**order


def predicted_gap(order: int, column: int, level: int, chi=None) -> float:
    here = eigenvalue_predictor(order, column, level, chi)
    gaps = [abs(eigenvalue_predictor(order, column, level + 1, chi) - here)]
    if level > 1:
        gaps.append(abs(here - eigenvalue_predictor(order, column, level - 1, chi)))
    return float(min(gaps))


def default_sampler(problem: ProblemDefinition):
    def sample(column: int, lams) -> ScaledComplex:
        return characteristic_minors(problem, lams, [(column, column)])[(column, column)]

    return sample


def _newton(sampler, column: int, seed: complex, gap: float) -> tuple[complex, int, bool]:
    lam = complex(seed)
    radius = settings.derivative_radius_ratio * gap
    nodes = settings.derivative_nodes
    angles = 2 * np.pi * np.arange(nodes) / nodes
    step = np.inf
    for iteration in range(1, settings.newton_max_iterations + 1):
        points = np.concatenate([[lam], lam + radius * np.exp(1j * angles)])
        values = sampler(column, points)
        reference = float(np.max(values.log_scale))
        samples = values.mantissa * np.exp(values.log_scale - reference)
        derivative = np.mean(samples[1:] * np.exp(-1j * angles)) / radius
        if derivative == 0:
            return lam, iteration, False
        step = samples[0] / derivative
        if abs(step) > 0.5 * gap:
            step *= 0.5 * gap / abs(step)
        lam -= step
        if abs(step) <= settings.newton_tolerance * (1 + abs(lam)):
            return lam, iteration, True
    converged = abs(step) <= settings.newton_accept_tolerance * (1 + abs(lam))
    return lam, settings.newton_max_iterations, converged


def winding_number(sampler, column: int, center: complex, radius: float) -> int:
    """Number of zeros of Delta_{k,k} inside the circle, by the argument principle."""
    nodes = settings.winding_nodes
    while True:
        values = sampler(column, circle_points(center, radius, nodes)).mantissa
        phase = np.angle(values)
        jumps = np.angle(np.exp(1j * np.diff(np.append(phase, phase[0]))))
        if np.max(np.abs(jumps)) < np.pi / 2 or nodes >= settings.winding_max_nodes:
            return int(round(np.sum(jumps) / (2 * np.pi)))
        nodes *= 2


@dataclass(frozen=True)
class RootReport:
    level: int
    eigenvalue: complex
    winding: int
    iterations: int
    converged: bool


def _is_duplicate(lam: complex, others) -> bool:
    return any(
        abs(lam - other) < settings.coincidence_tolerance * (1 + abs(lam)) for other in others
    )


def locate_column(
    problem: ProblemDefinition,
    column: int,
    levels: int,
    sampler=None,
    workers: int = None,
    chi=None,
) -> list[RootReport]:
    n = problem.order
    if not 1 <= column <= n - 1:
        raise OperatorError(f"Column must lie in 1..{n - 1}, got {column}.")
    if levels < 1:
        raise OperatorError(f"Need at least one level, got {levels}.")
    sampler = sampler or default_sampler(problem)
    if chi is None:
        chi, _ = seeding_constants(n, problem.boundary.p0, problem.boundary.p1)
    gaps = [predicted_gap(n, column, l, chi) for l in range(1, levels + 1)]

    def solve(level):
        seed = eigenvalue_predictor(n, column, level, chi)
        return _newton(sampler, column, seed, gaps[level - 1])

    attempts = parallel_map(solve, range(1, levels + 1), workers)

    accepted = []
    for level, (lam, iterations, converged) in zip(range(1, levels + 1), attempts):
        if not converged or _is_duplicate(lam, [root for root, _ in accepted]):
            log("debug", f"Re-seeding level {level} of column {column} (converged={converged}).")
            for offset in settings.reseed_offsets:
                seed = eigenvalue_predictor(n, column, level + offset, chi)
                lam, iterations, converged = _newton(sampler, column, seed, gaps[level - 1])
                if converged and not _is_duplicate(lam, [root for root, _ in accepted]):
                    break
            else:
                raise RootFindingError(
                    f"No distinct root found for level {level} of column {column}."
                )
        accepted.append((lam, iterations))

    accepted.sort(key=lambda item: abs(item[0]))
    roots = [lam for lam, _ in accepted]

    def certify(index):
        lam = roots[index]
        others = [abs(lam - other) for j, other in enumerate(roots) if j != index]
        radius = settings.certification_radius_ratio * gaps[index]
        if others:
            radius = min(radius, 0.5 * min(others))
        return winding_number(sampler, column, lam, radius)

    windings = parallel_map(certify, range(len(roots)), workers)
    reports = [
        RootReport(level, lam, winding, iterations, True)
        for level, ((lam, iterations), winding) in enumerate(zip(accepted, windings), start=1)
    ]
    for report in reports:
        log("debug", f"Column {column} level {report.level}: {report.eigenvalue:.10g} (winding {report.winding})")
    return reports


def locate_eigenvalues(
    problem: ProblemDefinition, column: int, levels: int, sampler=None, workers: int = None
) -> list[complex]:
    return [report.eigenvalue for report in locate_column(problem, column, levels, sampler, workers)]


@dataclass(frozen=True)
class ClassWReport:
    verdict: bool
    windings: dict
    min_gaps: dict
    offending: list

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "windings": {str(k): v for k, v in self.windings.items()},
            "min_gaps": {str(k): v for k, v in self.min_gaps.items()},
            "offending": [list(item) for item in self.offending],
        }


def class_w_report(reports: dict) -> ClassWReport:
    windings, min_gaps, offending = {}, {}, []
    for column, column_reports in sorted(reports.items()):
        windings[column] = [report.winding for report in column_reports]
        roots = [report.eigenvalue for report in column_reports]
        gaps = [abs(a - b) for i, a in enumerate(roots) for b in roots[i + 1 :]]
        min_gaps[column] = float(min(gaps)) if gaps else math.inf
        for report in column_reports:
            if report.winding != 1:
                offending.append((report.level, column))
        for i, a in enumerate(roots):
            for b in roots[i + 1 :]:
                if abs(a - b) <= 10 * settings.newton_tolerance * (1 + abs(a)):
                    offending.append((column_reports[i].level, column))
    return ClassWReport(not offending, windings, min_gaps, sorted(set(offending)))


def check_class_W(
    problem: ProblemDefinition, levels: int, sampler=None, workers: int = None
) -> ClassWReport:
    reports = {
        column: locate_column(problem, column, levels, sampler, workers)
        for column in range(1, problem.order)
    }
    return class_w_report(reports)


def weight_from_minors(numerator: ScaledComplex, derivative: ScaledComplex) -> complex:
    return complex(-numerator.ratio(derivative))


def weight_number(
    problem: ProblemDefinition, column: int, lam: complex, gap: float = None
) -> complex:
    """beta = -Delta_{k+1,k}(lambda) / Delta'_{k,k}(lambda) at a simple eigenvalue of column k."""
    n = problem.order
    if not 1 <= column <= n - 1:
        raise OperatorError(f"Column must lie in 1..{n - 1}, got {column}.")
    if gap is None:
        chi, _ = seeding_constants(n, problem.boundary.p0, problem.boundary.p1)
        level = round(abs(lam) ** (1 / n) / rho_scale(n, column) - chi[column - 1])
        gap = predicted_gap(n, column, max(1, level), chi)

    pairs = [(column + 1, column)] + [
        (adjacent, adjacent) for adjacent in (column - 1, column + 1) if 1 <= adjacent <= n - 1
    ]
    minors = characteristic_minors(problem, [lam], pairs)
    for adjacent in (column - 1, column + 1):
        if (adjacent, adjacent) in minors and abs(minors[(adjacent, adjacent)].mantissa[0]) < settings.pole_threshold:
            raise PoleProximityError(
                f"Eigenvalue {lam} of column {column} also belongs to column {adjacent}, use the full residue."
            )

    def sample(points):
        return characteristic_minors(problem, points, [(column, column)])[(column, column)]

    try:
        derivative = scaled_taylor_coefficient(
            sample,
            lam,
            1,
            settings.derivative_radius_ratio * gap,
            settings.laurent_nodes,
            degeneracy=1e-8,
        )
    except LaurentConvergenceError:
        raise RootFindingError(f"Suspected multiple root of column {column} at {lam}.")
    return weight_from_minors(minors[(column + 1, column)][0], derivative)


def residue_matrix(problem: ProblemDefinition, lam: complex, radius: float, nodes: int = None) -> np.ndarray:
    """N(lambda_0) = M_<0>^{-1} M_<-1> from contour quadrature of the Weyl matrix."""

    def sample(points):
        return weyl_matrices(problem, points, check_poles=False)

    coefficients = laurent_coefficients(sample, lam, radius, orders=(-1, 0), nodes=nodes)
    return np.linalg.solve(coefficients[0], coefficients[-1])


def upper_triangle_defect(residue: np.ndarray) -> float:
    """max |triu(N, 0)| relative to the largest entry of N."""
    scale = float(np.max(np.abs(residue)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(np.triu(residue)))) / scale


def strictly_lower_residue(residue: np.ndarray, lam: complex) -> np.ndarray:
    defect = upper_triangle_defect(residue)
    if not defect <= settings.residue_triangular_tolerance:
        raise LaurentConvergenceError(
            f"Residue at {lam} is not strictly lower triangular (upper part {defect:.3e})."
        )
    return np.tril(residue, -1)


def _nearest_other(lam: complex, points, excluded) -> float:
    distances = [
        abs(lam - point) for point in points if not _is_duplicate(point, excluded)
    ]
    return float(min(distances)) if distances else math.inf


def assemble_spectral_data(
    problem: ProblemDefinition,
    levels: int,
    workers: int = None,
    sampler=None,
    strict: bool = True,
) -> SpectralDataSet:
    n = problem.order
    chi, tabulated = seeding_constants(n, problem.boundary.p0, problem.boundary.p1)
    if not tabulated:
        log("warning", f"No tabulated asymptotic offsets for this boundary configuration, seeding with chi = 0.")

    reports = {
        column: locate_column(problem, column, levels, sampler, workers, chi)
        for column in range(1, n)
    }
    certificate = class_w_report(reports)
    eigenvalues = {
        column: [report.eigenvalue for report in column_reports]
        for column, column_reports in reports.items()
    }
    everything = [lam for column in eigenvalues.values() for lam in column]

    def residue_for(key):
        level, column = key
        lam = eigenvalues[column][level - 1]
        own = eigenvalues[column]
        neighbours = [abs(lam - other) for other in own if other != lam]
        gap = min(neighbours) if neighbours else predicted_gap(n, column, level, chi)
        others = [
            other for k, roots in eigenvalues.items() if k != column for other in roots
        ]
        if _is_duplicate(lam, others):
            radius = min(
                settings.derivative_radius_ratio * gap,
                settings.pole_circle_ratio * _nearest_other(lam, everything, [lam]),
            )
            residue = strictly_lower_residue(residue_matrix(problem, lam, radius), lam)
            return SpectralDatum(level, column, lam, residue, "full")
        weight = weight_number(problem, column, lam, gap)
        return SpectralDatum(level, column, lam, subdiagonal_residue(n, column, weight))

    keys = [(level, column) for column in range(1, n) for level in range(1, levels + 1)]
    data = tuple(parallel_map(residue_for, keys, workers))

    metadata = {"chi_tabulated": tabulated, "class_w": certificate.to_dict()}
    if problem.coefficients is not None:
        metadata["class"] = problem.coefficients.kind
        metadata["grid_points"] = len(problem.grid)
        metadata["coefficient_means"] = problem.coefficients.means()
        metadata["normalization"] = dict(problem.coefficients.normalization)
    data_set = SpectralDataSet(
        n, problem.boundary.p0, problem.boundary.p1, levels, data, chi, metadata
    )
    if strict and not certificate.verdict:
        raise ClassWViolation(
            f"Non-simple eigenvalues at {certificate.offending}.",
            report=certificate,
            partial=data_set,
        )
    return data_set


def fit_chi(data: SpectralDataSet, column: int, levels=None) -> tuple[float, float]:
    """Fitted asymptotic offset chi_k and its spread over a window of levels."""
    levels = levels or range(max(1, data.levels // 2), data.levels + 1)
    scale = rho_scale(data.order, column)
    offsets = np.array(
        [abs(data.datum(l, column).eigenvalue) ** (1 / data.order) / scale - l for l in levels]
    )
    return float(np.mean(offsets)), float(np.std(offsets))


def asymptotic_mean_tau1(data: SpectralDataSet, start: int = None) -> float:
    """Integral of tau_1 for n = 3 from the second term of the eigenvalue asymptotics."""
    if data.order != 3:
        raise OperatorError("The asymptotic mean estimate is only available for n = 3.")
    start = start or max(1, data.levels // 2)
    scale = rho_scale(3, 1)
    chi, _ = seeding_constants(3, data.p0, data.p1)
    estimates = [
        math.pi**2 * l * (-1) ** column * (
            abs(data.datum(l, column).eigenvalue) ** (1 / 3) / scale - l - chi[column - 1]
        )
        for column in (1, 2)
        for l in range(start, data.levels + 1)
    ]
    return float(np.mean(estimates))
