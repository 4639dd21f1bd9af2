import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, lu_factor, lu_solve
from scipy.special import comb

from hospec import settings
from hospec.errors import (
    DataMismatchError,
    LaurentConvergenceError,
    OperatorError,
    PoleProximityError,
    SingularSystemError,
)
from hospec.forward_spectral import SpectralDataSet, eigenvalue_predictor
from hospec.ode_engine import weyl_fields
from hospec.operator_core import ProblemDefinition, bracket_matrix, star_problem
from hospec.utils.helpers import parallel_map
from hospec.utils.logger import log


@dataclass(frozen=True, order=True)
class IndexV:
    """Element (l, k, eps) of the combined index set. eps = 0 target, eps = 1 model."""

    level: int
    column: int
    eps: int


def truncated_indices(order: int, truncation: int) -> list[IndexV]:
    return [
        IndexV(level, column, eps)
        for level in range(1, truncation + 1)
        for column in range(1, order)
        for eps in (0, 1)
    ]


@dataclass(frozen=True, eq=False)
class XiSequence:
    xi: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        product = self.xi * self.theta
        if np.any((np.abs(product) > 1e-12) & (np.abs(product - 1) > 1e-12)):
            raise DataMismatchError("theta must be the reciprocal of xi where xi is nonzero.")

    @property
    def truncation(self) -> int:
        return len(self.xi)


def xi_sequence(target: SpectralDataSet, model: SpectralDataSet, truncation: int = None) -> XiSequence:
    if target.order != model.order or tuple(target.p0) != tuple(model.p0):
        raise DataMismatchError("Target and model data describe different operator families.")
    if truncation is None:
        if target.levels != model.levels:
            raise DataMismatchError(
                f"Target has {target.levels} levels, model has {model.levels}.", field="L"
            )
        truncation = target.levels
    if truncation > min(target.levels, model.levels):
        raise DataMismatchError(f"Truncation {truncation} exceeds the available levels.", field="N")

    n, p0 = target.order, target.p0
    xi = np.zeros(truncation)
    for level in range(1, truncation + 1):
        total = 0.0
        for column in range(1, n):
            ours, theirs = target.datum(level, column), model.datum(level, column)
            total += abs(ours.eigenvalue - theirs.eigenvalue)
            scale = float(level) ** (p0[column - 1] - p0[column])
            total += scale * float(
                np.sum(np.abs(ours.residue[column:, column - 1] - theirs.residue[column:, column - 1]))
            )
        xi[level - 1] = total * float(level) ** (1 - n)
    theta = np.divide(1.0, xi, out=np.zeros_like(xi), where=xi > 0)
    return XiSequence(xi, theta)


def weight_w(level, column: int, x, p0, order: int):
    """l^{-p_{k+1,0}} exp(-x l cot(k pi / n))."""
    cotangent = math.cos(math.pi * column / order) / math.sin(math.pi * column / order)
    return np.asarray(level, dtype=float) ** (-p0[column]) * np.exp(
        -np.asarray(x) * level * cotangent
    )


@dataclass(frozen=True, eq=False)
class ModelFields:
    """Everything the main equation needs from the model problem, per index v.

    phi[v, i, j] is the j-th quasi-derivative of the regular part of the
    (k+1)-th Weyl solution at lambda_v; eta[v, i, j] is the j-th quasi-derivative
    of (-1)^eps e_{k+1}^T N J_0^{-1} g(x, lambda_v).
    """

    grid: np.ndarray
    indices: list
    lam: np.ndarray
    residue: np.ndarray
    sign: np.ndarray
    group: np.ndarray
    pole_column: np.ndarray
    model_residue: np.ndarray
    phi: np.ndarray
    r1: np.ndarray
    r1m: np.ndarray
    eta: np.ndarray
    circle_nodes: list
    circle_column: list
    brackets: list
    p0: tuple

    @property
    def order(self) -> int:
        return self.phi.shape[-1]


def _snap_groups(values: list) -> tuple[list, list]:
    centers, groups = [], []
    for lam in values:
        for index, center in enumerate(centers):
            if abs(lam - center) < settings.coincidence_tolerance * (1 + abs(center)):
                groups.append(index)
                break
        else:
            centers.append(lam)
            groups.append(len(centers) - 1)
    return centers, groups


def check_circle_convergence(center: complex, fine: np.ndarray, coarse: np.ndarray) -> None:
    """Compare a contour estimate on every node with the one on every other node."""
    scale = 1.0 + float(np.max(np.abs(fine)))
    difference = float(np.max(np.abs(fine - coarse)))
    if not difference <= settings.inverse_circle_tolerance * scale:
        raise LaurentConvergenceError(
            f"Contour expansion did not converge at {center} (difference {difference:.3e})."
        )


def model_fields(
    model_problem: ProblemDefinition,
    target: SpectralDataSet,
    model: SpectralDataSet,
    truncation: int,
    workers: int = None,
    own: SpectralDataSet = None,
) -> ModelFields:
    """Contour expansions of the Weyl solutions of model_problem at every lambda_v.

    own holds the eigenvalues of model_problem itself (defaults to the model
    data); they mark where the Weyl solutions have poles.
    """
    n = model_problem.order
    own = own or model
    indices = truncated_indices(n, truncation)
    data = [(target if v.eps == 0 else model).datum(v.level, v.column) for v in indices]
    centers, groups = _snap_groups([datum.eigenvalue for datum in data])

    singularities = np.concatenate(
        [
            target.all_eigenvalues(),
            model.all_eigenvalues(),
            [eigenvalue_predictor(n, k, model.levels + 1, model.chi or None) for k in range(1, n)],
        ]
    )

    def radius(center):
        distances = np.abs(singularities - center)
        distances = distances[distances >= settings.coincidence_tolerance * (1 + abs(center))]
        return settings.pole_circle_ratio * float(np.min(distances))

    star = star_problem(model_problem)
    bracket = model_problem.bracket
    dual_signs = np.linalg.inv(model_problem.signed_matrix(0))
    nodes = 2 * settings.inverse_circle_nodes
    angles = 2 * np.pi * np.arange(nodes) / nodes
    needed = {}
    for v, group in zip(indices, groups):
        needed.setdefault(group, set()).add(v.column)

    def expand(group):
        center = centers[group]
        points = center + radius(center) * np.exp(1j * angles)
        values = weyl_fields(model_problem, points)
        star_values = weyl_fields(star, points)
        star_regular = star_values.mean(axis=0)
        star_principal = radius(center) * np.mean(
            star_values * np.exp(1j * angles)[:, None, None, None], axis=0
        )
        coarse_principal = radius(center) * np.mean(
            star_values[::2] * np.exp(1j * angles[::2])[:, None, None, None], axis=0
        )
        used = values[:, :, :, sorted(needed[group])]
        check_circle_convergence(center, used.mean(axis=0), used[::2].mean(axis=0))
        check_circle_convergence(center, star_regular, star_values[::2].mean(axis=0))
        check_circle_convergence(center, star_principal, coarse_principal)
        dual = dual_signs @ np.swapaxes(star_regular, -1, -2)
        dual_principal = dual_signs @ np.swapaxes(star_principal, -1, -2)
        columns = {column: values[:, :, :, column] for column in needed[group]}
        return points, columns, dual, dual_principal

    log("debug", f"Expanding model fields on {len(centers)} contours.")
    expansions = parallel_map(expand, range(len(centers)), workers)

    model_poles = {}
    for datum in own.data:
        if datum.level > truncation:
            continue
        for group, center in enumerate(centers):
            if abs(datum.eigenvalue - center) < settings.coincidence_tolerance * (1 + abs(center)):
                model_poles.setdefault(group, []).append(datum)

    size = len(indices)
    points_count = len(model_problem.grid)
    phi = np.empty((size, points_count, n), dtype=complex)
    r1 = np.empty((size, points_count, n), dtype=complex)
    r1m = np.empty((size, points_count, n), dtype=complex)
    eta = np.empty((size, points_count, n), dtype=complex)
    residues = np.array([datum.residue for datum in data])
    model_residue = np.zeros((size, n, n), dtype=complex)
    pole_column = np.zeros(size, dtype=bool)
    sign = np.array([(-1.0) ** v.eps for v in indices])
    circle_nodes, circle_column, brackets = [], [], [expansion[2] for expansion in expansions]

    for index, (v, group) in enumerate(zip(indices, groups)):
        points, columns, dual, dual_principal = expansions[group]
        samples = columns[v.column]
        phi[index] = samples.mean(axis=0)
        row = residues[index, v.column, :]
        r1[index] = np.einsum("a,xac->xc", row, dual @ bracket)
        r1m[index] = np.einsum("a,xac->xc", row, dual_principal @ bracket)
        eta[index] = sign[index] * np.einsum("a,xaj->xj", row, dual)
        circle_nodes.append(points)
        circle_column.append(samples)
        poles = model_poles.get(group, [])
        full = [datum.residue for datum in poles if datum.kind == "full"]
        if full:
            model_residue[index] = full[0]
        elif poles:
            model_residue[index] = sum(datum.residue for datum in poles)
        pole_column[index] = any(datum.column == v.column + 1 for datum in poles)

    return ModelFields(
        grid=model_problem.grid,
        indices=indices,
        lam=np.array([centers[group] for group in groups]),
        residue=residues,
        sign=sign,
        group=np.array(groups),
        pole_column=pole_column,
        model_residue=model_residue,
        phi=phi,
        r1=r1,
        r1m=r1m,
        eta=eta,
        circle_nodes=circle_nodes,
        circle_column=circle_column,
        brackets=brackets,
        p0=tuple(model_problem.boundary.p0),
    )


def _special_pairs(fields: ModelFields) -> np.ndarray:
    same = fields.group[:, None] == fields.group[None, :]
    return same | fields.pole_column[None, :]


def _circle_values(fields: ModelFields, sources, target: int, nodes) -> np.ndarray:
    """Regular part at lambda_w of the column of P_v, for v in sources, w = target."""
    z = fields.circle_nodes[target]
    samples = fields.circle_column[target][:, nodes]
    first = np.einsum("vxc,qxc->vqx", fields.r1[sources][:, nodes], samples)
    second = np.einsum("vxc,qxc->vqx", fields.r1m[sources][:, nodes], samples)
    distance = z[None, :, None] - fields.lam[sources][:, None, None]
    return np.mean(first / distance + second / distance**2, axis=1)


def structural_G_matrix(fields: ModelFields, nodes) -> np.ndarray:
    """G[x, v, w] = <P_v(x, lambda)>_0 e_{k_w+1} at lambda = lambda_w, for the given grid nodes."""
    nodes = np.atleast_1d(np.arange(len(fields.grid))[nodes])
    phi = fields.phi[:, nodes]
    first = np.einsum("vxc,wxc->xvw", fields.r1[:, nodes], phi)
    second = np.einsum("vxc,wxc->xvw", fields.r1m[:, nodes], phi)
    special = _special_pairs(fields)
    difference = fields.lam[None, :] - fields.lam[:, None]
    safe = np.where(special, 1.0, difference)
    values = first / safe + second / safe**2
    values[:, special] = 0.0
    for target in np.nonzero(special.any(axis=0))[0]:
        sources = np.nonzero(special[:, target])[0]
        values[:, sources, target] = _circle_values(fields, sources, target, nodes).T
    return values


def structural_G(
    fields: ModelFields, source: int, target: int, nodes=slice(None), resolvent: bool = False
) -> np.ndarray:
    """Single G_{v,w} over grid nodes.

    resolvent=True evaluates the regular part through
    e^T N [(lambda - lambda_v) I + N~]^{-1} J_0^{-1} [Phi*_0]^T J Phi(lambda),
    which is an independent route to the same value.
    """
    if not resolvent:
        return structural_G_matrix(fields, nodes)[:, source, target]
    grid_nodes = np.atleast_1d(np.arange(len(fields.grid))[nodes])
    n = fields.order
    v = fields.indices[source]
    row = fields.residue[source, v.column, :]
    dual = fields.brackets[fields.group[source]][grid_nodes]
    bracket = bracket_matrix(n)
    z = fields.circle_nodes[target]
    samples = fields.circle_column[target][:, grid_nodes]
    values = np.zeros((len(z), len(grid_nodes)), dtype=complex)
    for q, point in enumerate(z):
        vector = row @ np.linalg.inv((point - fields.lam[source]) * np.eye(n) + fields.model_residue[source])
        values[q] = np.einsum("a,xac,xc->x", vector, dual @ bracket, samples[q])
    return values.mean(axis=0)


def _pair_matrices(xi: XiSequence, order: int) -> tuple[np.ndarray, np.ndarray]:
    levels = np.repeat(np.arange(xi.truncation), order - 1)
    pairs = len(levels)
    left = np.zeros((pairs, 2, 2))
    left[:, 0, 0] = xi.theta[levels]
    left[:, 0, 1] = -xi.theta[levels]
    left[:, 1, 1] = 1.0
    right = np.zeros((pairs, 2, 2))
    right[:, 0, 0] = xi.xi[levels]
    right[:, 0, 1] = 1.0
    right[:, 1, 1] = -1.0
    return left, right


def pair_weights(indices: list, grid_values, p0, order: int) -> np.ndarray:
    """w_{l,k}(x), shape (len(x), number of (l, k) pairs)."""
    pairs = [(v.level, v.column) for v in indices if v.eps == 0]
    x = np.atleast_1d(grid_values)
    return np.stack([weight_w(level, column, x, p0, order) for level, column in pairs], axis=1)


def transform_operator(G: np.ndarray, xi: XiSequence, weights: np.ndarray, order: int) -> np.ndarray:
    """Main-equation operator R[x] from G[x] (both (X, V, V))."""
    count, size = G.shape[0], G.shape[1]
    pairs = size // 2
    left, right = _pair_matrices(xi, order)
    blocks = G.reshape(count, pairs, 2, pairs, 2).transpose(0, 3, 4, 1, 2)
    ratio = weights[:, None, :] / weights[:, :, None]
    operator = np.einsum("qia,xqapb,pbj->xqipj", left, blocks, right)
    operator *= ratio[:, :, None, :, None]
    return operator.reshape(count, size, size)


def transform_values(values: np.ndarray, xi: XiSequence, weights: np.ndarray, order: int) -> np.ndarray:
    """psi = w^{-1} [[theta, -theta], [0, 1]] phi, pair-wise."""
    left, _ = _pair_matrices(xi, order)
    pairs = values.reshape(-1, 2)
    return (np.einsum("pij,pj->pi", left, pairs) / weights[:, None]).reshape(-1)


def recover_phi(psi: np.ndarray, xi: XiSequence, weights: np.ndarray, order: int) -> np.ndarray:
    levels = np.repeat(np.arange(xi.truncation), order - 1)
    pairs = psi.reshape(-1, 2)
    recovered = np.empty_like(pairs)
    recovered[:, 0] = weights * (xi.xi[levels] * pairs[:, 0] + pairs[:, 1])
    recovered[:, 1] = weights * pairs[:, 1]
    return recovered.reshape(-1)


@dataclass(frozen=True, eq=False)
class MainEquationSystem:
    x: float
    indices: list
    psi_tilde: np.ndarray
    operator: np.ndarray
    xi: XiSequence
    weights: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.eye(len(self.psi_tilde)) - self.operator

    @property
    def row_sum(self) -> float:
        return float(np.max(np.sum(np.abs(self.operator), axis=1)))


@dataclass(frozen=True, eq=False)
class MainEquationSolution:
    psi: np.ndarray
    residual: float
    factor: tuple
    condition: float = None


def assemble_main_equation(
    fields: ModelFields, xi: XiSequence, node: int, G: np.ndarray = None
) -> MainEquationSystem:
    if fields.indices and fields.indices[-1].level != xi.truncation:
        raise DataMismatchError("xi sequence and model fields use different truncations.")
    if G is None:
        G = structural_G_matrix(fields, [node])[0]
    x = float(fields.grid[node])
    weights = pair_weights(fields.indices, x, fields.p0, fields.order)
    operator = transform_operator(G[None], xi, weights, fields.order)[0]
    psi_tilde = transform_values(fields.phi[:, node, 0], xi, weights[0], fields.order)
    return MainEquationSystem(x, fields.indices, psi_tilde, operator, xi, weights[0])


def solve_main_equation(system: MainEquationSystem, diagnostics: bool = False) -> MainEquationSolution:
    matrix = system.matrix
    try:
        factor = lu_factor(matrix)
    except (LinAlgError, ValueError) as e:
        raise SingularSystemError(f"Main equation is singular at x = {system.x}: {e}")
    if np.any(np.diag(factor[0]) == 0):
        raise SingularSystemError(f"Main equation is singular at x = {system.x}.")
    psi = lu_solve(factor, system.psi_tilde)
    residual = float(np.max(np.abs(matrix @ psi - system.psi_tilde)))
    bound = settings.solve_residual_tolerance * (1 + float(np.max(np.abs(system.psi_tilde))))
    if not residual <= bound:
        raise SingularSystemError(
            f"Main equation residual {residual:.3e} exceeds {bound:.3e} at x = {system.x}."
        )
    condition = None
    if diagnostics:
        condition = float(np.linalg.cond(matrix, 1))
        if condition > settings.singular_condition:
            raise SingularSystemError(
                f"Main equation is numerically singular at x = {system.x} (condition {condition:.3e})."
            )
    return MainEquationSolution(psi, residual, factor, condition)


@dataclass(frozen=True, eq=False)
class InverseSolution:
    """phi[j, v, i] is the j-th derivative of phi_v at grid node i.

    increment[i] is max_v |phi_v(N) - phi_v(N // 2)| over the indices both
    truncations share, filled only for diagnostic solves.
    """

    grid: np.ndarray
    indices: list
    xi: XiSequence
    phi: np.ndarray
    residual: np.ndarray
    row_sum: np.ndarray
    condition: np.ndarray
    fields: ModelFields
    mode: str
    increment: np.ndarray = None

    @property
    def orders(self) -> int:
        return self.phi.shape[0]


def series_value(phi: np.ndarray, eta: np.ndarray, first: int, second: int) -> complex:
    """sum_v phi_v^{(first)} eta_v^{(second)} at one node; phi is (orders, V), eta is (V, n)."""
    return complex(np.sum(phi[first] * eta[:, second]))


def derivative_rhs(
    fields: ModelFields, phi: np.ndarray, order: int, node: int, mode: str
) -> np.ndarray:
    """Right-hand side of the main equation differentiated `order` times in x."""
    base = fields.phi[:, node]
    eta = fields.eta[:, node]
    if mode == "quasi":
        return base[:, order] + series_value(phi, eta, order - 1, 0) * base[:, 0]
    rhs = base[:, order].copy()
    for i in range(1, order + 1):
        for m in range(i):
            rhs += (
                comb(order, i, exact=True)
                * comb(i - 1, m, exact=True)
                * series_value(phi, eta, order - i, i - 1 - m)
                * base[:, m]
            )
    return rhs


def _is_shift_model(problem: ProblemDefinition) -> bool:
    n = problem.order
    shift = np.eye(n, k=1)
    return bool(np.all(np.abs(problem.matrix.entries - shift) < 1e-14))


def solve_inverse(
    model_problem: ProblemDefinition,
    target: SpectralDataSet,
    model: SpectralDataSet,
    truncation: int,
    orders: int = 1,
    workers: int = None,
    diagnostics: bool = False,
    mode: str = "quasi",
    fields: ModelFields = None,
) -> InverseSolution:
    """Solve the main equation at every grid node for `orders` derivative orders of phi_v."""
    n = model_problem.order
    if mode not in ("quasi", "ordinary"):
        raise OperatorError(f"Unknown derivative mode '{mode}'.")
    if mode == "ordinary" and not _is_shift_model(model_problem):
        raise OperatorError("Ordinary derivative mode needs the zero-coefficient model.")
    if not 1 <= orders <= n:
        raise OperatorError(f"Derivative orders must lie in 1..{n}, got {orders}.")
    xi = xi_sequence(target, model, truncation)
    if fields is None:
        fields = model_fields(model_problem, target, model, truncation, workers)
    grid = model_problem.grid
    size = len(fields.indices)

    chunks = [
        np.arange(start, min(start + settings.x_chunk, len(grid)))
        for start in range(0, len(grid), settings.x_chunk)
    ]

    def solve_chunk(nodes):
        G = structural_G_matrix(fields, nodes)
        weights = pair_weights(fields.indices, grid[nodes], fields.p0, n)
        operators = transform_operator(G, xi, weights, n)
        phi = np.zeros((orders, size, len(nodes)), dtype=complex)
        residual = np.zeros(len(nodes))
        row_sum = np.zeros(len(nodes))
        condition = np.full(len(nodes), np.nan)
        for i, node in enumerate(nodes):
            system = MainEquationSystem(
                float(grid[node]),
                fields.indices,
                transform_values(fields.phi[:, node, 0], xi, weights[i], n),
                operators[i],
                xi,
                weights[i],
            )
            solution = solve_main_equation(system, diagnostics)
            residual[i] = solution.residual
            row_sum[i] = system.row_sum
            if solution.condition is not None:
                condition[i] = solution.condition
            phi[0, :, i] = recover_phi(solution.psi, xi, weights[i], n)
            for order in range(1, orders):
                rhs = derivative_rhs(fields, phi[:, :, i], order, node, mode)
                psi = lu_solve(solution.factor, transform_values(rhs, xi, weights[i], n))
                phi[order, :, i] = recover_phi(psi, xi, weights[i], n)
        return phi, residual, row_sum, condition

    results = parallel_map(solve_chunk, chunks, workers)
    phi = np.concatenate([result[0] for result in results], axis=2)
    residual = np.concatenate([result[1] for result in results])
    row_sum = np.concatenate([result[2] for result in results])
    condition = np.concatenate([result[3] for result in results])
    log("debug", f"Main equation solved on {len(grid)} nodes, max row sum {np.max(row_sum):.3e}.")
    increment = None
    if diagnostics and truncation >= 2:
        increment = truncation_increment(model_problem, target, model, truncation, phi[0], workers, mode)
        log(
            "debug",
            f"Truncation increment {np.max(increment):.3e} between N = {truncation // 2} and N = {truncation}.",
        )
    return InverseSolution(
        grid, fields.indices, xi, phi, residual, row_sum, condition, fields, mode, increment
    )


def truncation_increment(
    model_problem: ProblemDefinition,
    target: SpectralDataSet,
    model: SpectralDataSet,
    truncation: int,
    phi: np.ndarray,
    workers: int = None,
    mode: str = "quasi",
) -> np.ndarray:
    """Per-node max_v |phi_v| change when the truncation is halved; phi is (V, X) at `truncation`."""
    coarse = solve_inverse(model_problem, target, model, truncation // 2, workers=workers, mode=mode)
    shared = len(coarse.indices)
    return np.max(np.abs(phi[:shared] - coarse.phi[0]), axis=0)


def synthesize_weyl(
    model_problem: ProblemDefinition, solution: InverseSolution, lam: complex
) -> tuple[np.ndarray, float]:
    """First row of the target Weyl solution on the grid, plus the last-level contribution."""
    fields = solution.fields
    if np.any(np.abs(fields.lam - lam) < settings.coincidence_tolerance * (1 + abs(lam))):
        raise PoleProximityError(f"lambda = {lam} coincides with a truncated eigenvalue.")
    model_values = weyl_fields(model_problem, [lam])[0]
    row = model_values[:, 0, :]
    distance = (lam - fields.lam)[:, None, None]
    corrections = (
        np.einsum("vxc,xcj->vxj", fields.r1, model_values) / distance
        + np.einsum("vxc,xcj->vxj", fields.r1m, model_values) / distance**2
    )
    terms = (fields.sign[:, None] * solution.phi[0])[:, :, None] * corrections
    last = [i for i, v in enumerate(fields.indices) if v.level == solution.xi.truncation]
    tail = float(np.max(np.abs(np.sum(terms[last], axis=0)))) if last else 0.0
    return row + np.sum(terms, axis=0), tail


def sum_r_defect(
    target_problem: ProblemDefinition,
    model_problem: ProblemDefinition,
    target: SpectralDataSet,
    model: SpectralDataSet,
    truncation: int,
    nodes,
    workers: int = None,
) -> float:
    """max |R - R~ - R~ R| over the given nodes."""
    xi = xi_sequence(target, model, truncation)
    model_side = model_fields(model_problem, target, model, truncation, workers)
    target_side = model_fields(target_problem, target, model, truncation, workers, own=target)
    nodes = np.atleast_1d(np.arange(len(model_problem.grid))[nodes])
    weights = pair_weights(model_side.indices, model_problem.grid[nodes], model_side.p0, model_problem.order)
    model_operator = transform_operator(
        structural_G_matrix(model_side, nodes), xi, weights, model_problem.order
    )
    target_operator = transform_operator(
        structural_G_matrix(target_side, nodes), xi, weights, model_problem.order
    )
    defect = target_operator - model_operator - model_operator @ target_operator
    return float(np.max(np.abs(defect)))
