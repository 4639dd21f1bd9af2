import json

import numpy as np
import pytest

from hospec import settings
from hospec.config import (
    evaluate_tokens,
    load_problem,
    load_run_config,
    load_spectral_data,
    parse_problem,
)
from hospec.errors import ConfigError, DataMismatchError
from hospec.operator_core import uniform_grid


@pytest.fixture
def grid():
    return uniform_grid(101)


def write(path, document):
    with open(path, "w") as f:
        json.dump(document, f)
    return path


def test_tokens(grid):
    values = evaluate_tokens([["const", 0.2], ["poly", 0.3, 2], ["sin", 1.0, "1/2"]], grid, "f")
    assert np.allclose(values, 0.2 + 0.3 * grid**2 + np.sin(0.5 * np.pi * grid))


def test_unknown_token_kind(grid):
    with pytest.raises(ConfigError) as e:
        evaluate_tokens([["exp", 1.0, 2]], grid, "coefficients.tau1")
    assert e.value.field == "coefficients.tau1"


def test_bad_frequency(grid):
    with pytest.raises(ConfigError):
        evaluate_tokens([["cos", 1.0, "1/0"]], grid, "f")


def test_n3_fixture():
    problem = load_problem(settings.fixtures_dir / "n3_fixture.json")
    coefficients = problem.coefficients
    assert problem.order == 3 and len(problem.grid) == 401
    assert np.allclose(coefficients.coefficient("tau1"), 0.4 * np.cos(2 * np.pi * problem.grid))
    # sigma0 is stored with zero mean
    assert coefficients.normalization["sigma0"] == pytest.approx(0.4 / np.pi, rel=1e-6)


def test_grid_override():
    problem = load_problem(settings.fixtures_dir / "n4_regular.json", grid_points=101)
    assert len(problem.grid) == 101
    assert np.allclose(problem.coefficients.coefficient("tau0"), 0.2 + 0.3 * problem.grid**2)


def test_samples_are_resampled():
    samples = np.linspace(0.0, 1.0, 51) ** 2
    document = {
        "n": 2,
        "class": "schrodinger-n2",
        "grid_points": 101,
        "coefficients": {"sigma0": {"kind": "samples", "data": samples.tolist()}},
    }
    problem = parse_problem(document)
    grid = problem.grid
    assert np.allclose(problem.coefficients.coefficient("sigma0"), grid**2 - 1 / 3, atol=1e-10)


@pytest.mark.parametrize(
    "document, field",
    [
        ({"class": "n3-mixed"}, "n"),
        ({"n": 3}, "class"),
        ({"n": 3, "class": "regular-even"}, "class"),
        ({"n": 3, "class": "n3-mixed", "grid_points": 8}, "grid_points"),
        ({"n": 3, "class": "n3-mixed", "coefficients": {"tau2": {"kind": "expr", "tokens": [["const", 1]]}}}, "coefficients.tau2"),
        ({"n": 3, "class": "n3-mixed", "boundary": {"p0": [0, 0, 1], "p1": [2, 1, 0]}}, "boundary"),
    ],
)
def test_malformed_problem(document, field):
    with pytest.raises(ConfigError) as e:
        parse_problem(document)
    assert e.value.field == field
    assert e.value.exit_code == 64


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError) as e:
        load_problem(tmp_path / "absent.json")
    assert e.value.field == "config"


def test_spectral_data_document(tmp_path):
    path = write(tmp_path / "data.json", {"n": 2, "L": 2, "data": [{"l": 1, "k": 1}]})
    with pytest.raises(DataMismatchError) as e:
        load_spectral_data(path)
    assert e.value.exit_code == 64


def test_run_config(tmp_path):
    options = load_run_config(settings.fixtures_dir / "run_config.yaml")
    assert options == {"levels": 10, "truncation": 10, "grid_points": 201, "workers": 2}

    path = tmp_path / "run.yaml"
    path.write_text("command: forward\nconfig: problem.json\nno: true\n")
    options = load_run_config(path)
    assert options["command"] == "forward"
    assert options["config_path"] == str(tmp_path / "problem.json")
    assert options["no"] is True


def test_run_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("levels: 3\nspeed: fast\n")
    with pytest.raises(ConfigError) as e:
        load_run_config(path)
    assert e.value.field == "run-config.speed"
