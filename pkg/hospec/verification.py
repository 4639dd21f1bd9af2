from dataclasses import dataclass

import numpy as np

from hospec import settings
from hospec.forward_spectral import (
    SpectralDataSet,
    assemble_spectral_data,
    residue_matrix,
    upper_triangle_defect,
)
from hospec.inverse_core import sum_r_defect
from hospec.ode_engine import integrate_fundamental, weyl_fields, weyl_matrices
from hospec.operator_core import ProblemDefinition, star_problem
from hospec.reconstruction import ReconstructionState
from hospec.utils.helpers import parallel_map
from hospec.utils.logger import log

DETERMINANT_THRESHOLD = 1e-8
DUALITY_THRESHOLD = 1e-6
DIFFERENCE_THRESHOLD = 1e-4
NILPOTENCY_THRESHOLD = 1e-8
WEIGHT_THRESHOLD = 1e-6
SUM_R_THRESHOLD = 1e-6
TRIANGULAR_THRESHOLD = 1e-6


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    violation: float
    threshold: float
    samples: int = 0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.violation) and self.violation < self.threshold)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "violation": self.violation,
            "threshold": self.threshold,
            "samples": self.samples,
            "passed": self.passed,
        }


def probe_points(count: int, radius: float, seed: int = 0) -> np.ndarray:
    """Spectral parameters in the upper half-plane, away from the real eigenvalue ladders."""
    rng = np.random.default_rng(seed)
    moduli = radius ** rng.uniform(0.0, 1.0, count)
    angles = rng.uniform(np.pi / 4, 3 * np.pi / 4, count)
    return moduli * np.exp(1j * angles)


def check_determinant(problem: ProblemDefinition, lams, workers: int = None) -> IdentityCheck:
    drifts = parallel_map(
        lambda lam: integrate_fundamental(problem, lam).determinant_drift(), list(lams), workers
    )
    return IdentityCheck("det C(x) drift", float(max(drifts)), DETERMINANT_THRESHOLD, len(drifts))


def check_weyl_duality(problem: ProblemDefinition, lams) -> IdentityCheck:
    """[M*]^T J_0 M = J_0."""
    j0 = problem.signed_matrix(0)
    matrices = weyl_matrices(problem, lams)
    star_matrices = weyl_matrices(star_problem(problem), lams)
    products = np.swapaxes(star_matrices, -1, -2) @ j0 @ matrices
    violation = float(np.max(np.abs(products - j0)) / np.max(np.abs(j0)))
    return IdentityCheck("[M*]^T J0 M = J0", violation, DUALITY_THRESHOLD, len(lams))


def check_field_duality(problem: ProblemDefinition, lams, nodes: int = 5) -> IdentityCheck:
    """[Phi*(x)]^T J Phi(x) = J_0 at a few grid nodes."""
    j0 = problem.signed_matrix(0)
    picked = np.linspace(0, len(problem.grid) - 1, nodes).astype(int)
    values = weyl_fields(problem, lams)[:, picked]
    star_values = weyl_fields(star_problem(problem), lams)[:, picked]
    products = np.swapaxes(star_values, -1, -2) @ problem.bracket @ values
    violation = float(np.max(np.abs(products - j0)) / np.max(np.abs(j0)))
    return IdentityCheck("[Phi*]^T J Phi = J0", violation, DUALITY_THRESHOLD, len(lams) * nodes)


def central_difference(values: np.ndarray, step: float) -> np.ndarray:
    """Fourth-order central differences along axis 0, interior nodes only."""
    return (-values[4:] + 8 * values[3:-1] - 8 * values[1:-3] + values[:-4]) / (12 * step)


def check_bracket_derivative(problem: ProblemDefinition, lams) -> IdentityCheck:
    """Brackets of solutions of the problem and its star at equal lambda are constant in x."""
    step = problem.grid[1] - problem.grid[0]
    star = star_problem(problem)
    violation = 0.0
    for lam in lams:
        values = weyl_fields(problem, [lam])[0]
        star_values = weyl_fields(star, [lam])[0]
        brackets = np.swapaxes(star_values, -1, -2) @ problem.bracket @ values
        scale = float(np.max(np.abs(brackets)))
        violation = max(violation, float(np.max(np.abs(central_difference(brackets, step)))) / scale)
    return IdentityCheck("d/dx <z, y> = 0", violation, DIFFERENCE_THRESHOLD, len(lams))


def check_transition_derivative(problem: ProblemDefinition, pairs) -> IdentityCheck:
    """d/dx of (lambda-mu)^{-1} Phi(x,mu)^{-1} Phi(x,lambda) against J_0^{-1} [phi*(x,mu)]^T phi(x,lambda)."""
    step = problem.grid[1] - problem.grid[0]
    star = star_problem(problem)
    inverse_j0 = np.linalg.inv(problem.signed_matrix(0))
    violation = 0.0
    for lam, mu in pairs:
        values = weyl_fields(problem, [lam])[0]
        star_values = weyl_fields(star, [mu])[0]
        transition = (
            inverse_j0 @ np.swapaxes(star_values, -1, -2) @ problem.bracket @ values / (lam - mu)
        )
        expected = inverse_j0 @ (star_values[:, 0, :, None] * values[:, 0, None, :])
        difference = central_difference(transition, step) - expected[2:-2]
        scale = float(np.max(np.abs(expected)))
        violation = max(violation, float(np.max(np.abs(difference))) / scale)
    return IdentityCheck("D'(x) = J0^-1 [phi*]^T phi", violation, DIFFERENCE_THRESHOLD, len(pairs))


def check_residues(problem: ProblemDefinition, data: SpectralDataSet, probes: int = 10) -> list:
    defects = [datum.nilpotency_defect() for datum in data.data]
    everything = data.all_eigenvalues()
    simple = [datum for datum in data.data if datum.kind == "subdiagonal"][:probes]
    deviations, upper = [], []
    for datum in simple:
        lam = datum.eigenvalue
        distances = np.abs(everything - lam)
        nearest = float(np.min(distances[distances > settings.coincidence_tolerance * (1 + abs(lam))]))
        residue = residue_matrix(problem, lam, settings.pole_circle_ratio * nearest)
        upper.append(upper_triangle_defect(residue))
        laurent = residue[datum.column, datum.column - 1]
        deviations.append(abs(laurent - datum.weight) / abs(datum.weight))
    return [
        IdentityCheck("N^2 = 0", float(max(defects, default=0.0)), NILPOTENCY_THRESHOLD, len(defects)),
        IdentityCheck(
            "Laurent vs minor-ratio beta",
            float(max(deviations, default=0.0)),
            WEIGHT_THRESHOLD,
            len(deviations),
        ),
        IdentityCheck(
            "N strictly lower triangular", float(max(upper, default=0.0)), TRIANGULAR_THRESHOLD, len(upper)
        ),
    ]


def default_model_problem(problem: ProblemDefinition) -> ProblemDefinition:
    """First-step model of the reconstruction for the problem's coefficient class."""
    coefficients = problem.coefficients
    kind = "distributional-even" if coefficients.kind == "schrodinger-n2" else coefficients.kind
    state = ReconstructionState(
        problem.order, kind, problem.grid, problem.boundary, coefficients.means()
    )
    return state.model_problem()


def check_sum_r(
    problem: ProblemDefinition,
    data: SpectralDataSet,
    truncation: int = 3,
    workers: int = None,
) -> IdentityCheck:
    model_problem = default_model_problem(problem)
    truncation = min(truncation, data.levels)
    model = assemble_spectral_data(model_problem, data.levels, workers, strict=False)
    last = len(problem.grid) - 1
    nodes = [last // 4, last // 2, 3 * last // 4]
    defect = sum_r_defect(problem, model_problem, data, model, truncation, nodes, workers)
    return IdentityCheck("R - R~ - R~R = 0", defect, SUM_R_THRESHOLD, len(nodes))


def run_identity_suite(
    problem: ProblemDefinition,
    levels: int = 4,
    probes: int = 10,
    radius: float = 1e4,
    workers: int = None,
    seed: int = 0,
) -> list[IdentityCheck]:
    """Structural identities of a problem, its Weyl matrix and its spectral data."""
    checks = []
    log("info", "Checking the fundamental solution and duality identities.")
    checks.append(check_determinant(problem, probe_points(2 * probes, radius, seed), workers))
    lams = probe_points(probes, min(radius, 1e3), seed + 1)
    checks.append(check_weyl_duality(problem, lams))
    checks.append(check_field_duality(problem, lams[:5]))
    moderate = probe_points(4, 50.0, seed + 2)
    checks.append(check_bracket_derivative(problem, moderate[:2]))
    checks.append(check_transition_derivative(problem, [(moderate[0], moderate[1]), (moderate[2], moderate[3])]))

    log("info", f"Assembling spectral data up to level {levels}.")
    data = assemble_spectral_data(problem, levels, workers, strict=False)
    checks.extend(check_residues(problem, data, probes))
    if problem.coefficients is not None:
        checks.append(check_sum_r(problem, data, workers=workers))

    for check in checks:
        log("debug", f"{check.name}: {check.violation:.3e}")
    return checks
