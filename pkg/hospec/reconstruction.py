import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicSpline
from scipy.special import comb

from hospec import settings
from hospec.errors import ConfigError, OperatorError
from hospec.forward_spectral import (
    SpectralDataSet,
    asymptotic_mean_tau1,
    assemble_spectral_data,
)
from hospec.inverse_core import IndexV, InverseSolution, solve_inverse
from hospec.operator_core import (
    BoundaryConfig,
    CoefficientSet,
    ProblemDefinition,
    build_problem,
    coefficient_names,
    uniform_grid,
)
from hospec.utils.logger import log


@dataclass(frozen=True, eq=False)
class SeriesTerm:
    index: IndexV
    sign: float
    phi: np.ndarray
    eta: np.ndarray

    @property
    def product(self) -> np.ndarray:
        return self.phi * self.eta


def series_terms(solution: InverseSolution, first: int, second: int) -> list[SeriesTerm]:
    if first >= solution.orders:
        raise OperatorError(f"Derivative order {first} of phi was not solved for.")
    fields = solution.fields
    return [
        SeriesTerm(v, fields.sign[i], solution.phi[first][i], fields.eta[i, :, second])
        for i, v in enumerate(solution.indices)
    ]


def series_T(solution: InverseSolution, first: int, second: int) -> tuple[np.ndarray, float]:
    """sum_V phi_v^{(first)} eta_v^{(second)} on the grid and the size of the last level's share.

    Both members of an eps pair are added before the level sum.
    """
    levels = {}
    for term in series_terms(solution, first, second):
        levels.setdefault(term.index.level, 0.0)
        levels[term.index.level] = levels[term.index.level] + term.product
    total = sum(levels.values())
    imaginary = float(np.max(np.abs(np.imag(total))))
    if imaginary > 1e-6 * (1 + float(np.max(np.abs(total)))):
        log("debug", f"Series T[{first},{second}] has imaginary part {imaginary:.3e}.")
    tail = float(np.max(np.abs(levels[max(levels)])))
    return np.real(total), tail


def summability_report(xi: np.ndarray, power: float = 1.0) -> dict:
    """Partial sums of (l^power xi_l)^2 and whether they have levelled off."""
    levels = np.arange(1, len(xi) + 1)
    partial = np.cumsum((levels**power * xi) ** 2)
    window = min(10, max(1, len(xi) // 2))
    final = float(partial[-1])
    previous = float(partial[-1 - window]) if len(xi) > window else 0.0
    increment = (final - previous) / final if final > 0 else 0.0
    return {
        "power": power,
        "partial_sums": partial.tolist(),
        "last_window_increment": increment,
        "plateau": increment < settings.plateau_tolerance,
    }


def _normalized(samples: np.ndarray, grid: np.ndarray) -> np.ndarray:
    return samples - simpson(samples, x=grid)


def reconstruct_n3(solution: InverseSolution, model: CoefficientSet) -> dict:
    """tau_1 and the zero-mean sigma_0 for n = 3 from a constant-tau_1 model."""
    grid = solution.grid
    model_tau = model.coefficient("tau1")
    if np.ptp(model_tau) > 1e-12 or np.any(np.abs(model.coefficient("sigma0")) > 1e-12):
        raise OperatorError("The n = 3 reconstruction needs a constant tau_1 model with sigma_0 = 0.")
    plain, _ = series_T(solution, 0, 0)
    derivative, _ = series_T(solution, 1, 0)
    dual_derivative, _ = series_T(solution, 0, 1)

    tau1 = model_tau - 1.5 * (derivative + dual_derivative)
    shift = tau1 - model_tau
    sigma0 = -shift - 3 * derivative - 2 * cumulative_simpson(shift * plain, x=grid, initial=0)
    return {"tau1": tau1, "sigma0": _normalized(sigma0, grid)}


def regular_step_weights(order: int, step: int) -> dict:
    """Coefficients C(n,r) C(r-1,n-s-1) keyed by (n-r, r-n+s), plus the closing term."""
    weights = {}
    for r in range(order - step, order + 1):
        key = (order - r, r - order + step)
        weights[key] = weights.get(key, 0) + comb(order, r, exact=True) * comb(
            r - 1, order - step - 1, exact=True
        )
    weights[(0, step)] = weights.get((0, step), 0) + (-1) ** (step + 1)
    closing = sum(
        comb(order, r, exact=True) * comb(r - 1, order - step - 1, exact=True) * (-1) ** r
        for r in range(order - step, order + 1)
    )
    if closing + (-1) ** (step + 1) != 0:
        raise OperatorError(f"Step weights of order {order}, step {step} do not cancel the closing term.")
    return weights


def reconstruct_even_step(step: int, solution: InverseSolution, model: CoefficientSet) -> np.ndarray:
    """tau_{n-s-1} for a regular even-order operator, from the step-s model."""
    n = model.order
    total = np.zeros(len(solution.grid))
    for (first, second), weight in regular_step_weights(n, step).items():
        total += weight * series_T(solution, first, second)[0]
    factor = 0.5 if step % 2 == 0 else 1.0
    return model.coefficient(f"tau{n - step - 1}") - factor * total


def distributional_step_weights(order: int, step: int) -> list[int]:
    """b_j = sum_{i <= j} (-1)^{j-i} a_i for j < s."""
    if not 1 <= step < order:
        raise OperatorError(f"Step must lie in 1..{order - 1}, got {step}.")
    a = [
        comb(order, step - j, exact=True) * comb(order - step + j - 1, j, exact=True)
        for j in range(step + 1)
    ]
    a[step] += (-1) ** (step + 1)
    if sum((-1) ** j * value for j, value in enumerate(a)) != 0:
        raise OperatorError(f"Alternating step weights of order {order}, step {step} do not sum to zero.")
    return [sum((-1) ** (j - i) * a[i] for i in range(j + 1)) for j in range(step)]


def reconstruct_even_distributional_step(step: int, solution: InverseSolution, order: int) -> np.ndarray:
    """Zero-mean sigma_{n-s-1} from the step-s model."""
    total = np.zeros(len(solution.grid))
    for j, weight in enumerate(distributional_step_weights(order, step)):
        total += weight * series_T(solution, step - j - 1, j)[0]
    factor = 0.5 if step % 2 == 0 else 1.0
    return _normalized(-factor * total, solution.grid)


def _p_combination(order: int, derivative) -> dict:
    """p_s of l y = y^{(n)} + sum_s p_s y^{(s)} from tau_nu^{(d)} = derivative(nu, d)."""
    p = {}
    for s in range(order - 1):
        total = 0.0
        for k in range(math.ceil(s / 2), min(s, order // 2 - 1) + 1):
            total = total + comb(k, s - k, exact=True) * (
                derivative(2 * k, 2 * k - s) + derivative(2 * k + 1, 2 * k - s + 1)
            )
        for k in range(math.ceil((s - 1) / 2), min(s, (order - 1) // 2)):
            total = total + 2 * comb(k, s - k - 1, exact=True) * derivative(2 * k + 1, 2 * k + 1 - s)
        p[s] = total
    return p


def _spline_derivatives(grid: np.ndarray, samples: dict, order: int):
    splines = {nu: CubicSpline(grid, values) for nu, values in samples.items()}

    def derivative(nu, d):
        if nu >= order - 1 or nu not in splines:
            return np.zeros(len(grid))
        return splines[nu](grid, d) if d else np.asarray(samples[nu])

    return derivative


def p_from_tau(coefficients: CoefficientSet) -> dict:
    if coefficients.kind != "regular-even":
        raise OperatorError("p_s expansion is defined for the regular even class.")
    n = coefficients.order
    samples = {nu: coefficients.coefficient(f"tau{nu}") for nu in range(n - 1)}
    return _p_combination(n, _spline_derivatives(coefficients.grid, samples, n))


def tau_from_p(p: dict, grid: np.ndarray, order: int) -> dict:
    """Invert the triangular p_s / tau_nu relation from the top index down."""
    taus = {}
    for nu in range(order - 2, -1, -1):
        known = _p_combination(order, _spline_derivatives(grid, taus, order))[nu]
        multiplicity = 1.0 if nu % 2 == 0 else 2.0
        taus[nu] = (np.asarray(p[nu]) - known) / multiplicity
    return taus


def find_p(solution: InverseSolution) -> dict:
    """p_s of the target from a zero-coefficient model (ordinary derivatives)."""
    if solution.mode != "ordinary":
        raise OperatorError("find_p needs phi derivatives solved in ordinary mode.")
    n = solution.fields.order
    if solution.orders < n:
        raise OperatorError(f"find_p needs {n} derivative orders of phi.")
    cache = {}

    def T(first, second):
        if (first, second) not in cache:
            cache[(first, second)] = series_T(solution, first, second)[0]
        return cache[(first, second)]

    def t(k, s):
        return sum(
            comb(k, r + 1, exact=True) * comb(r, s, exact=True) * T(k - r - 1, r - s)
            for r in range(s, k)
        )

    p = {}
    for s in range(n - 2, -1, -1):
        value = (-1) ** (n - s - 1) * T(0, n - s - 1) - t(n, s)
        for k in range(s + 1, n - 1):
            value = value - p[k] * t(k, s)
        p[s] = value
    return p


def reconstruct_general(solution: InverseSolution) -> dict:
    n = solution.fields.order
    taus = tau_from_p(find_p(solution), solution.grid, n)
    return {f"tau{nu}": values for nu, values in sorted(taus.items())}


@dataclass
class ReconstructionState:
    """Coefficients recovered so far and the model they induce for the next step."""

    order: int
    kind: str
    grid: np.ndarray
    boundary: BoundaryConfig
    means: dict = field(default_factory=dict)
    recovered: dict = field(default_factory=dict)
    step: int = 1

    def model_coefficients(self) -> CoefficientSet:
        n, s = self.order, self.step
        values = {}
        match self.kind:
            case "n3-mixed":
                values["tau1"] = np.full(len(self.grid), self.means.get("tau1", 0.0))
            case "regular-even":
                for nu in range(n - s, n - 1):
                    values[f"tau{nu}"] = self.recovered[f"tau{nu}"]
                values[f"tau{n - s - 1}"] = np.full(
                    len(self.grid), self.means.get(f"tau{n - s - 1}", 0.0)
                )
            case "distributional-even":
                for nu in range(n - s, n - 1):
                    values[f"sigma{nu}"] = self.recovered[f"sigma{nu}"]
        return CoefficientSet.from_samples(n, self.kind, self.grid, values)

    def model_problem(self) -> ProblemDefinition:
        return build_problem(self.model_coefficients(), self.boundary)


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    kind: str
    grid: np.ndarray
    coefficients: dict
    steps: list


def _resolve_means(target: SpectralDataSet, kind: str, means: dict) -> dict:
    resolved = dict(target.metadata.get("coefficient_means") or {})
    resolved.update(means or {})
    if kind == "n3-mixed" and "tau1" not in resolved:
        resolved["tau1"] = asymptotic_mean_tau1(target)
        log("info", f"Estimated the mean of tau1 from eigenvalue asymptotics: {resolved['tau1']:.6g}")
    if kind == "regular-even":
        missing = [f"tau{nu}" for nu in range(target.order - 1) if f"tau{nu}" not in resolved]
        if missing:
            log("warning", f"No means recorded for {', '.join(missing)}, using 0.")
    return resolved


def _step_summary(step: int, name: str, solution: InverseSolution, tail: float) -> dict:
    if tail > settings.tail_warning_threshold:
        log("warning", f"Series tail {tail:.3e} at step {step}, the truncation may be too small.")
    return {
        "step": step,
        "coefficient": name,
        "truncation": solution.xi.truncation,
        "max_residual": float(np.max(solution.residual)),
        "max_row_sum": float(np.max(solution.row_sum)),
        "max_condition": float(np.nanmax(solution.condition))
        if np.any(np.isfinite(solution.condition))
        else None,
        "max_truncation_increment": None if solution.increment is None else float(np.max(solution.increment)),
        "tail": tail,
        "summability": summability_report(solution.xi.xi),
    }


def reconstruct(
    target: SpectralDataSet,
    truncation: int,
    grid_points: int,
    kind: str = None,
    means: dict = None,
    model_problem: ProblemDefinition = None,
    workers: int = None,
    diagnostics: bool = False,
    route: str = "stepwise",
) -> ReconstructionResult:
    """Recover the coefficients of the operator behind `target`.

    route="general" takes the regular even class through p_s with a zero model.
    """
    if route not in ("stepwise", "general"):
        raise ConfigError(f"Unknown reconstruction route '{route}'.", field="route")
    kind = kind or target.metadata.get("class")
    if kind is None:
        raise ConfigError("Coefficient class is neither in the data metadata nor given.", field="class")
    n = target.order
    coefficient_names(n, kind)
    if truncation > target.levels:
        log("warning", f"Truncation {truncation} exceeds the data, clipping to {target.levels}.")
        truncation = target.levels

    internal = "distributional-even" if kind == "schrodinger-n2" else kind
    grid = uniform_grid(grid_points)
    boundary = BoundaryConfig.from_exponents(target.p0, target.p1)
    state = ReconstructionState(n, internal, grid, boundary, _resolve_means(target, internal, means))
    steps = []

    def run_step(orders, problem=None, mode="quasi"):
        problem = problem or state.model_problem()
        model_data = assemble_spectral_data(problem, truncation, workers, strict=False)
        solution = solve_inverse(
            problem, target, model_data, truncation, orders, workers, diagnostics, mode
        )
        return problem, solution

    if route == "general":
        if internal != "regular-even":
            raise ConfigError("The general route covers the regular even class only.", field="route")
        zero = build_problem(CoefficientSet.zero(n, internal, grid), boundary)
        _, solution = run_step(n, zero, "ordinary")
        state.recovered.update(reconstruct_general(solution))
        steps.append(_step_summary(1, "p", solution, series_T(solution, n - 1, 0)[1]))
        internal = "done"

    match internal:
        case "n3-mixed":
            problem, solution = run_step(2, model_problem)
            model = problem.coefficients or state.model_coefficients()
            state.recovered.update(reconstruct_n3(solution, model))
            tail = max(series_T(solution, 1, 0)[1], series_T(solution, 0, 1)[1])
            steps.append(_step_summary(1, "tau1, sigma0", solution, tail))
        case "regular-even":
            for step in range(1, n):
                state.step = step
                name = f"tau{n - step - 1}"
                log("info", f"Step {step}/{n - 1}: recovering {name}")
                _, solution = run_step(step + 1)
                state.recovered[name] = reconstruct_even_step(
                    step, solution, state.model_coefficients()
                )
                steps.append(_step_summary(step, name, solution, series_T(solution, 0, step)[1]))
        case "distributional-even":
            for step in range(1, n):
                state.step = step
                name = f"sigma{n - step - 1}"
                log("info", f"Step {step}/{n - 1}: recovering {name}")
                _, solution = run_step(step)
                state.recovered[name] = reconstruct_even_distributional_step(step, solution, n)
                steps.append(_step_summary(step, name, solution, series_T(solution, step - 1, 0)[1]))

    coefficients = {name: np.real(values) for name, values in state.recovered.items()}
    if kind == "schrodinger-n2":
        coefficients = {"sigma0": -coefficients["sigma0"]}
    return ReconstructionResult(kind, grid, coefficients, steps)


def relative_l2_error(recovered: np.ndarray, truth: np.ndarray, grid: np.ndarray) -> float:
    scale = math.sqrt(simpson(np.asarray(truth) ** 2, x=grid))
    difference = math.sqrt(simpson((np.asarray(recovered) - np.asarray(truth)) ** 2, x=grid))
    return difference / scale if scale > 0 else difference
