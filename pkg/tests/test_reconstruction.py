import numpy as np
import pytest

from hospec import settings
from hospec.config import load_problem
from hospec.errors import ConfigError, OperatorError
from hospec.forward_spectral import (
    SpectralDataSet,
    SpectralDatum,
    assemble_spectral_data,
    subdiagonal_residue,
)
from hospec.inverse_core import solve_inverse
from hospec.operator_core import (
    CoefficientSet,
    build_problem,
    default_boundary,
    uniform_grid,
)
from hospec.reconstruction import (
    ReconstructionState,
    distributional_step_weights,
    find_p,
    p_from_tau,
    reconstruct,
    reconstruct_even_distributional_step,
    reconstruct_n3,
    regular_step_weights,
    relative_l2_error,
    series_T,
    summability_report,
    tau_from_p,
)


@pytest.fixture
def grid() -> np.ndarray:
    return uniform_grid(101)


@pytest.fixture
def ladder_n2() -> SpectralDataSet:
    data = tuple(
        SpectralDatum(l, 1, -((np.pi * l) ** 2), subdiagonal_residue(2, 1, 2 * np.pi**2 * l**2))
        for l in (1, 2)
    )
    return SpectralDataSet(2, (0, 1), (1, 0), 2, data)


def test_regular_step_weights():
    assert regular_step_weights(4, 1) == {(1, 0): 4, (0, 1): 4}
    assert regular_step_weights(4, 2) == {(2, 0): 6, (1, 1): 8, (0, 2): 2}


def test_distributional_step_weights():
    assert distributional_step_weights(2, 1) == [2]
    assert distributional_step_weights(4, 1) == [4]
    assert distributional_step_weights(4, 2) == [6, 2]


def test_step_weights_reject_unsupported_orders():
    # odd orders leave the closing term uncancelled
    with pytest.raises(OperatorError):
        regular_step_weights(3, 1)
    with pytest.raises(OperatorError):
        distributional_step_weights(2, 4)


def test_p_expansion_for_order_four(grid):
    coefficients = CoefficientSet(
        4,
        "regular-even",
        grid,
        {"tau2": grid**2, "tau1": grid.copy(), "tau0": np.ones(len(grid))},
    )
    p = p_from_tau(coefficients)
    assert np.allclose(p[2], grid**2)
    assert np.allclose(p[1], 2 * grid + 2 * grid)
    assert np.allclose(p[0], 2.0)


def test_tau_from_p_inverts_expansion(grid):
    values = {
        "tau2": 0.5 * np.cos(2 * np.pi * grid),
        "tau1": 0.3 * grid**3,
        "tau0": 0.2 + 0.3 * grid**2,
    }
    coefficients = CoefficientSet(4, "regular-even", grid, values)
    taus = tau_from_p(p_from_tau(coefficients), grid, 4)
    for nu in range(3):
        assert np.allclose(taus[nu], values[f"tau{nu}"], atol=1e-8)


def test_p_expansion_needs_regular_class(grid):
    with pytest.raises(OperatorError):
        p_from_tau(CoefficientSet.zero(4, "distributional-even", grid))


def test_summability_plateau():
    levels = np.arange(1, 26)
    assert summability_report(1 / levels**2)["plateau"]
    assert not summability_report(1 / levels)["plateau"]
    report = summability_report(1 / levels**2, power=1.0)
    assert len(report["partial_sums"]) == 25
    assert report["partial_sums"][-1] == pytest.approx(np.sum(1 / levels**2))


def test_stepwise_models(grid):
    state = ReconstructionState(4, "regular-even", grid, default_boundary(4), {"tau1": 0.1, "tau2": 0.4})
    assert np.allclose(state.model_coefficients().coefficient("tau2"), 0.4)
    assert np.allclose(state.model_coefficients().coefficient("tau1"), 0.0)

    state.step = 2
    state.recovered["tau2"] = np.sin(np.pi * grid)
    model = state.model_coefficients()
    assert np.allclose(model.coefficient("tau2"), np.sin(np.pi * grid))
    assert np.allclose(model.coefficient("tau1"), 0.1)
    assert np.allclose(model.coefficient("tau0"), 0.0)

    n3 = ReconstructionState(3, "n3-mixed", grid, default_boundary(3), {"tau1": -0.2})
    assert np.allclose(n3.model_coefficients().coefficient("tau1"), -0.2)


def test_relative_error(grid):
    truth = np.sin(np.pi * grid)
    assert relative_l2_error(truth, truth, grid) == 0.0
    assert relative_l2_error(1.1 * truth, truth, grid) == pytest.approx(0.1)


def test_reconstruct_needs_class(ladder_n2):
    with pytest.raises(ConfigError) as e:
        reconstruct(ladder_n2, 2, 101)
    assert e.value.field == "class"


def test_general_route_is_regular_only(ladder_n2):
    with pytest.raises(ConfigError) as e:
        reconstruct(ladder_n2, 2, 101, kind="schrodinger-n2", route="general")
    assert e.value.field == "route"


def test_n3_zero_perturbation(grid):
    model = build_problem(
        CoefficientSet(3, "n3-mixed", grid, {"tau1": np.full(len(grid), 0.3)}), default_boundary(3)
    )
    data = assemble_spectral_data(model, 3, workers=2)
    solution = solve_inverse(model, data, data, 2, orders=2, workers=2)
    recovered = reconstruct_n3(solution, model.coefficients)

    assert np.allclose(series_T(solution, 0, 0)[0], 0.0, atol=1e-9)
    assert np.allclose(recovered["tau1"], 0.3, atol=1e-8)
    assert np.allclose(recovered["sigma0"], 0.0, atol=1e-8)


def test_n3_needs_constant_model(grid):
    model = build_problem(
        CoefficientSet(3, "n3-mixed", grid, {"tau1": np.full(len(grid), 0.3)}), default_boundary(3)
    )
    data = assemble_spectral_data(model, 2, workers=2)
    solution = solve_inverse(model, data, data, 1, orders=2, workers=2)
    varying = CoefficientSet(3, "n3-mixed", grid, {"tau1": grid.copy()})
    with pytest.raises(OperatorError):
        reconstruct_n3(solution, varying)


def test_distributional_step_zero_perturbation(grid):
    problem = build_problem(
        CoefficientSet.from_samples(2, "distributional-even", grid, {"sigma0": 0.3 * np.cos(2 * np.pi * grid)}),
        default_boundary(2),
    )
    data = assemble_spectral_data(problem, 3, workers=2)
    solution = solve_inverse(problem, data, data, 3, workers=2)
    assert np.allclose(reconstruct_even_distributional_step(1, solution, 2), 0.0, atol=1e-9)
    with pytest.raises(OperatorError):
        find_p(solution)


@pytest.mark.slow
def test_schrodinger_round_trip():
    grid = uniform_grid(201)
    truth = CoefficientSet.from_samples(2, "schrodinger-n2", grid, {"sigma0": 0.5 * np.sin(2 * np.pi * grid)})
    data = assemble_spectral_data(build_problem(truth, default_boundary(2)), 20)
    result = reconstruct(data, 20, 201)
    assert relative_l2_error(result.coefficients["sigma0"], truth.coefficient("sigma0"), grid) < 0.1


@pytest.mark.slow
def test_n3_round_trip():
    grid = uniform_grid(401)
    truth = CoefficientSet.from_samples(
        3,
        "n3-mixed",
        grid,
        {"tau1": 0.4 * np.cos(2 * np.pi * grid), "sigma0": 0.2 * np.sin(np.pi * grid)},
    )
    data = assemble_spectral_data(build_problem(truth, default_boundary(3)), 25)
    errors = []
    for levels in (10, 15, 20, 25):
        result = reconstruct(data.truncated(levels), levels, 401)
        errors.append(
            {name: relative_l2_error(values, truth.coefficient(name), grid) for name, values in result.coefficients.items()}
        )
    assert errors[-1]["tau1"] < 0.05
    assert errors[-1]["sigma0"] < 0.08
    assert all(a["tau1"] > b["tau1"] for a, b in zip(errors, errors[1:]))


@pytest.mark.slow
def test_regular_even_round_trip():
    grid = uniform_grid(401)
    truth = CoefficientSet(
        4,
        "regular-even",
        grid,
        {
            "tau2": 0.5 * np.cos(2 * np.pi * grid),
            "tau1": 0.3 * np.sin(np.pi * grid),
            "tau0": 0.2 + 0.3 * grid**2,
        },
    )
    data = assemble_spectral_data(build_problem(truth, default_boundary(4)), 25)
    result = reconstruct(data, 25, 401)
    for name, values in result.coefficients.items():
        assert relative_l2_error(values, truth.coefficient(name), grid) < 0.1


@pytest.mark.slow
def test_distributional_even_round_trip():
    problem = load_problem(settings.fixtures_dir / "n4_distributional.json")
    grid = problem.grid
    data = assemble_spectral_data(problem, 25)
    result = reconstruct(data, 25, len(grid))
    assert list(result.coefficients) == ["sigma2", "sigma1", "sigma0"]
    error = relative_l2_error(result.coefficients["sigma2"], problem.coefficients.coefficient("sigma2"), grid)
    assert error < 0.1
