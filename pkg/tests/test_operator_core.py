import numpy as np
import pytest

from hospec.errors import OperatorError
from hospec.operator_core import (
    AssociatedMatrix,
    BoundaryConfig,
    CoefficientSet,
    associated_matrix,
    apply_boundary_form,
    bracket_matrix,
    build_problem,
    default_boundary,
    dual_boundary_matrix,
    lagrange_bracket,
    star_entries,
    star_problem,
    uniform_grid,
)


@pytest.fixture
def grid() -> np.ndarray:
    return uniform_grid(101)


@pytest.fixture
def n3_coefficients(grid) -> CoefficientSet:
    return CoefficientSet.from_samples(
        3,
        "n3-mixed",
        grid,
        {"tau1": 0.4 * np.cos(2 * np.pi * grid), "sigma0": 0.2 * np.sin(np.pi * grid)},
    )


def test_n3_matrix_layout(n3_coefficients):
    entries = associated_matrix(n3_coefficients).entries
    tau1 = n3_coefficients.coefficient("tau1")
    sigma0 = n3_coefficients.coefficient("sigma0")

    assert np.allclose(entries[:, 0, 1], 1.0) and np.allclose(entries[:, 1, 2], 1.0)
    assert np.allclose(entries[:, 1, 0], -(sigma0 + tau1))
    assert np.allclose(entries[:, 2, 1], sigma0 - tau1)
    assert np.allclose(np.diagonal(entries, axis1=1, axis2=2), 0.0)


def test_antiderivative_is_mean_normalized(n3_coefficients, grid):
    sigma0 = n3_coefficients.coefficient("sigma0")
    # 0.2 sin(pi x) has mean 0.4 / pi
    assert n3_coefficients.normalization["sigma0"] == pytest.approx(0.4 / np.pi, rel=1e-6)
    assert np.allclose(sigma0, 0.2 * np.sin(np.pi * grid) - 0.4 / np.pi, atol=1e-6)
    assert "tau1" not in n3_coefficients.normalization


def test_regular_even_rows_for_order_six(grid):
    values = {f"tau{nu}": np.full(len(grid), float(nu + 1)) for nu in range(5)}
    entries = associated_matrix(CoefficientSet(6, "regular-even", grid, values)).entries[0]

    assert np.allclose(entries[3], [0, -4, -5, 0, 1, 0])
    assert np.allclose(entries[5], [-1, -2, 0, 0, 0, 0])


def test_distributional_entries_for_order_four(grid):
    coefficients = CoefficientSet.from_samples(
        4,
        "distributional-even",
        grid,
        {
            "sigma0": np.sin(2 * np.pi * grid),
            "sigma1": np.cos(2 * np.pi * grid),
            "sigma2": 0.5 * np.sin(4 * np.pi * grid),
        },
    )
    entries = associated_matrix(coefficients).entries
    s0, s1, s2 = (coefficients.coefficient(f"sigma{nu}") for nu in range(3))

    assert np.allclose(entries[:, 2, 0], -s0 - s1 * s2)
    assert np.allclose(entries[:, 3, 1], s0 - s1 * s2)
    assert np.allclose(np.trace(entries, axis1=1, axis2=2), 0.0, atol=1e-14)


def test_schrodinger_zero_potential_is_shift(grid):
    entries = associated_matrix(CoefficientSet.zero(2, "schrodinger-n2", grid)).entries
    assert np.allclose(entries, [[0, 1], [0, 0]])


def test_rejects_nonzero_trace(grid):
    entries = np.zeros((len(grid), 3, 3))
    entries[:, 0, 1] = entries[:, 1, 2] = 1.0
    entries[:, 0, 0] = 0.5
    with pytest.raises(OperatorError):
        AssociatedMatrix.from_entries(grid, entries)


def test_rejects_foreign_coefficient(grid):
    with pytest.raises(OperatorError) as e:
        CoefficientSet(3, "n3-mixed", grid, {"tau2": np.zeros(len(grid))})
    assert e.value.field == "coefficients.tau2"


def test_rejects_odd_order_for_even_class(grid):
    with pytest.raises(OperatorError):
        CoefficientSet.zero(5, "regular-even", grid)


def test_default_boundary_for_order_three():
    boundary = default_boundary(3)
    assert np.array_equal(boundary.u0, np.eye(3))
    assert np.array_equal(boundary.u1, np.fliplr(np.eye(3)))


def test_boundary_requires_permutation():
    with pytest.raises(OperatorError) as e:
        BoundaryConfig.from_exponents((0, 0, 2), (2, 1, 0))
    assert e.value.field == "boundary.p0"


def test_dual_signs_for_order_four(grid):
    problem = build_problem(CoefficientSet.zero(4, "regular-even", grid), default_boundary(4))
    j0 = problem.signed_matrix(0)
    assert np.array_equal(j0, np.fliplr(np.diag([1.0, -1.0, 1.0, -1.0])))
    assert np.allclose(
        dual_boundary_matrix(problem, 0).T @ j0 @ problem.boundary.u0, problem.bracket
    )


def test_dual_boundary_pairs_with_bracket_on_both_sides(grid):
    boundary = BoundaryConfig.from_exponents((0, 2, 1), (2, 1, 0))
    problem = build_problem(CoefficientSet.zero(3, "n3-mixed", grid), boundary)
    for side in (0, 1):
        dual = dual_boundary_matrix(problem, side)
        pairing = dual.T @ problem.signed_matrix(side) @ boundary.matrix(side)
        assert np.allclose(pairing, problem.bracket, atol=1e-12)


def test_star_is_an_involution(n3_coefficients):
    problem = build_problem(n3_coefficients, default_boundary(3))
    twice = star_problem(star_problem(problem))
    assert np.allclose(twice.matrix.entries, problem.matrix.entries, atol=1e-12)
    assert np.allclose(twice.boundary.u0, problem.boundary.u0, atol=1e-12)
    assert np.allclose(twice.boundary.u1, problem.boundary.u1, atol=1e-12)


def test_constant_n3_model_is_self_dual(grid):
    coefficients = CoefficientSet(3, "n3-mixed", grid, {"tau1": np.full(len(grid), 0.3)})
    entries = associated_matrix(coefficients).entries
    assert np.allclose(star_entries(entries), entries)


def test_bracket_matches_matrix_form():
    rng = np.random.default_rng(7)
    z, y = rng.normal(size=4), rng.normal(size=4)
    assert lagrange_bracket(z, y) == pytest.approx(z @ bracket_matrix(4) @ y, abs=1e-14)


def test_boundary_forms_permute(grid):
    problem = build_problem(CoefficientSet.zero(3, "n3-mixed", grid), default_boundary(3))
    vector = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(apply_boundary_form(problem, 0, vector), vector)
    assert np.array_equal(apply_boundary_form(problem, 1, vector), [3.0, 2.0, 1.0])
