import numpy as np
import pytest

from hospec.errors import LaurentConvergenceError, OperatorError
from hospec.ode_engine import (
    char_minor,
    compound_matrices,
    integrate_fundamental,
    laurent_coefficients,
    minor_columns,
    step_propagators,
    weyl_matrix,
    weyl_solutions,
)
from hospec.operator_core import CoefficientSet, build_problem, default_boundary, uniform_grid


@pytest.fixture
def zero_n2():
    grid = uniform_grid(201)
    return build_problem(CoefficientSet.zero(2, "schrodinger-n2", grid), default_boundary(2))


@pytest.fixture
def n3_problem():
    grid = uniform_grid(201)
    coefficients = CoefficientSet.from_samples(
        3,
        "n3-mixed",
        grid,
        {"tau1": 0.4 * np.cos(2 * np.pi * grid), "sigma0": 0.2 * np.sin(np.pi * grid)},
    )
    return build_problem(coefficients, default_boundary(3))


def test_propagators_are_unimodular(n3_problem):
    propagators = step_propagators(n3_problem, [3.0 + 40.0j, -250.0])
    assert propagators.shape == (2, 200, 3, 3)
    assert np.allclose(np.linalg.det(propagators), 1.0, atol=1e-12)


@pytest.mark.parametrize("lam", [12.0 + 5.0j, -900.0 + 30.0j, 4000.0j])
def test_determinant_is_constant(n3_problem, lam):
    assert integrate_fundamental(n3_problem, lam).determinant_drift() < 1e-8


def test_zero_potential_fundamental_solution(zero_n2):
    rho = 2.3 + 0.4j
    solution = integrate_fundamental(zero_n2, -(rho**2))
    final = solution.unscaled(len(zero_n2.grid) - 1)
    assert final[0, 0] == pytest.approx(np.cos(rho), rel=1e-10)
    assert final[0, 1] == pytest.approx(np.sin(rho) / rho, rel=1e-10)


def test_zero_potential_weyl_function(zero_n2):
    rho = 2.3 + 0.4j
    matrix = weyl_matrix(zero_n2, -(rho**2))
    assert matrix[0, 0] == pytest.approx(1.0)
    assert matrix[0, 1] == pytest.approx(0.0)
    assert matrix[1, 0] == pytest.approx(-np.cos(rho) / (np.sin(rho) / rho), rel=1e-10)


def test_characteristic_minor_vanishes_on_ladder(zero_n2):
    lam = -((2 * np.pi) ** 2)
    on = char_minor(zero_n2, 1, 1, lam).value
    off = char_minor(zero_n2, 1, 1, lam + 5.0).value
    assert abs(on) < 1e-10 * abs(off)


def test_empty_minor_is_one(n3_problem):
    assert char_minor(n3_problem, 3, 3, 7.0 + 1.0j).value == pytest.approx(1.0)


def test_minor_columns():
    assert minor_columns(3, 1, 1) == ((1, 2), 1.0)
    assert minor_columns(3, 2, 1) == ((0, 2), 1.0)
    assert minor_columns(4, 3, 1) == ((0, 1, 3), -1.0)
    with pytest.raises(OperatorError):
        minor_columns(3, 1, 2)


def test_top_compound_is_determinant():
    rng = np.random.default_rng(3)
    matrices = rng.normal(size=(5, 4, 4))
    assert np.allclose(compound_matrices(matrices, 4)[:, 0, 0], np.linalg.det(matrices))
    assert np.allclose(compound_matrices(matrices, 1), matrices)


def test_weyl_solutions_start_from_weyl_matrix(n3_problem):
    lam = 20.0 + 15.0j
    field = weyl_solutions(n3_problem, lam)
    # U_0 = I, so Phi(0) = M
    assert np.allclose(field.matrix, weyl_matrix(n3_problem, lam), rtol=1e-8, atol=1e-10)
    assert np.allclose(np.tril(field.matrix), field.matrix)


def test_weyl_solutions_satisfy_boundary_conditions(n3_problem):
    field = weyl_solutions(n3_problem, 20.0 + 15.0j)
    start = n3_problem.boundary.u0 @ field.values[0]
    end = n3_problem.boundary.u1 @ field.values[-1]
    for k in range(3):
        assert np.allclose(start[: k + 1, k], np.eye(3)[: k + 1, k], atol=1e-10)
        assert np.allclose(end[k + 1 :, k], 0.0, atol=1e-10)


def test_laurent_coefficients_of_rational_function():
    def sampler(z):
        return 1 / (z - 1) + 2 + 3 * (z - 1)

    coefficients = laurent_coefficients(sampler, 1.0, 0.5, orders=(-1, 0, 1))
    assert coefficients[-1] == pytest.approx(1.0)
    assert coefficients[0] == pytest.approx(2.0)
    assert coefficients[1] == pytest.approx(3.0)


def test_laurent_radius_bound():
    with pytest.raises(LaurentConvergenceError):
        laurent_coefficients(lambda z: 1 / (z - 1.5), 1.0, 0.4, singularities=[1.5])
