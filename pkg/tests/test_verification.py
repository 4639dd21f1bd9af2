import numpy as np
import pytest

from hospec import settings
from hospec.config import load_problem
from hospec.forward_spectral import assemble_spectral_data
from hospec.operator_core import CoefficientSet, build_problem, default_boundary, uniform_grid
from hospec.verification import (
    IdentityCheck,
    central_difference,
    check_bracket_derivative,
    check_determinant,
    check_residues,
    check_weyl_duality,
    default_model_problem,
    probe_points,
    run_identity_suite,
)


@pytest.fixture
def zero_n2():
    grid = uniform_grid(201)
    return build_problem(CoefficientSet.zero(2, "schrodinger-n2", grid), default_boundary(2))


def test_identity_check_verdict():
    assert IdentityCheck("a", 1e-9, 1e-8).passed
    assert not IdentityCheck("b", 1e-7, 1e-8).passed
    assert not IdentityCheck("c", float("nan"), 1e-8).passed
    assert IdentityCheck("a", 1e-9, 1e-8, 3).to_dict()["passed"] is True


def test_probe_points_stay_in_upper_sector():
    points = probe_points(50, 1e4, seed=5)
    angles = np.angle(points)
    assert np.all(angles >= np.pi / 4) and np.all(angles <= 3 * np.pi / 4)
    assert np.all(np.abs(points) <= 1e4)


def test_central_difference_is_exact_for_cubics():
    grid = np.linspace(0.0, 1.0, 41)
    step = grid[1] - grid[0]
    assert np.allclose(central_difference(grid**3, step), 3 * grid[2:-2] ** 2, atol=1e-10)


def test_zero_potential_identities(zero_n2):
    lam = 4.0 + 3.0j
    assert check_determinant(zero_n2, [lam], workers=1).violation < 1e-10
    assert check_weyl_duality(zero_n2, [lam]).violation < 1e-10
    assert check_bracket_derivative(zero_n2, [lam]).violation < 1e-8


def test_residue_checks_include_triangularity(zero_n2):
    data = assemble_spectral_data(zero_n2, 3, workers=1)
    checks = {check.name: check for check in check_residues(zero_n2, data, probes=2)}
    triangular = checks["N strictly lower triangular"]
    assert triangular.samples == 2
    assert triangular.passed


def test_default_model_for_n3():
    problem = load_problem(settings.fixtures_dir / "n3_fixture.json", grid_points=101)
    model = default_model_problem(problem)
    tau1 = model.coefficients.coefficient("tau1")
    assert np.ptp(tau1) == 0.0
    assert tau1[0] == pytest.approx(problem.coefficients.means()["tau1"])
    assert np.allclose(model.coefficients.coefficient("sigma0"), 0.0)


@pytest.mark.slow
def test_identity_suite_on_n3_fixture():
    problem = load_problem(settings.fixtures_dir / "n3_fixture.json", grid_points=201)
    checks = run_identity_suite(problem, levels=4, probes=6)
    failed = [check.to_dict() for check in checks if not check.passed]
    assert not failed
