import csv
import json

import numpy as np
import pytest
from numpy.linalg import LinAlgError

import hospec.main
from hospec import settings
from hospec.errors import ClassWViolation
from hospec.forward_spectral import check_class_W, eigenvalue_predictor
from hospec.main import main
from hospec.ode_engine import ScaledComplex
from hospec.utils.cli_args import args, parser

QUIET = ["-n", "info", "success", "warning", "report"]


@pytest.fixture(autouse=True)
def isolated_outputs(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "outputs_dir", tmp_path / ".hospec")
    yield
    # Reset the shared args so later tests see parser defaults
    for key, value in vars(parser.parse_args([])).items():
        setattr(args, key, value)


@pytest.fixture
def zero_config():
    return str(settings.fixtures_dir / "n2_zero.json")


def test_version():
    assert main(["--version"]) == 0


def test_forward_then_invert(tmp_path, zero_config):
    data_path = tmp_path / "data.json"
    assert main(["forward", "-c", zero_config, "-L", "3", "-g", "101", "-w", "1", "-o", str(data_path)] + QUIET) == 0

    with open(data_path) as f:
        document = json.load(f)
    assert document["n"] == 2 and document["L"] == 3
    assert len(document["data"]) == 3
    assert document["metadata"]["class"] == "schrodinger-n2"

    csv_path = tmp_path / "recovered.csv"
    code = main(
        ["invert", "-D", str(data_path), "-N", "3", "-g", "101", "-t", zero_config, "-o", str(csv_path)]
        + QUIET
    )
    assert code == 0
    with open(csv_path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["x", "sigma0"]
    assert len(rows) == 102

    with open(tmp_path / "recovered_report.json") as f:
        report = json.load(f)
    assert report["status"] == "ok"
    assert report["errors"]["sigma0"] < 1e-8


def test_output_must_not_overwrite_input(tmp_path, zero_config):
    config = tmp_path / "problem.json"
    config.write_text(open(zero_config).read())
    with pytest.raises(SystemExit) as e:
        main(["forward", "-c", str(config), "-o", str(config)] + QUIET)
    assert e.value.code == 64
    assert json.loads(config.read_text())["class"] == "schrodinger-n2"


def test_malformed_config(tmp_path):
    config = tmp_path / "broken.yaml"
    config.write_text("n: three\nclass: n3-mixed\n")
    with pytest.raises(SystemExit) as e:
        main(["forward", "-c", str(config), "-o", str(tmp_path / "data.json")] + QUIET)
    assert e.value.code == 64

    with open(tmp_path / "error_report.json") as f:
        report = json.load(f)
    assert report["error"] == "ConfigError"
    assert report["field"] == "n"


def test_missing_data_path():
    with pytest.raises(SystemExit) as e:
        main(["invert"] + QUIET)
    assert e.value.code == 64


def test_run_config_fills_unset_flags(tmp_path, zero_config):
    data_path = tmp_path / "data.json"
    run_config = tmp_path / "run.yaml"
    run_config.write_text(f"levels: 2\ngrid: 101\nworkers: 1\nconfig: {zero_config}\n")
    assert main(["forward", "-r", str(run_config), "-o", str(data_path), "-L", "3"] + QUIET) == 0
    assert args.grid_points == 101
    with open(data_path) as f:
        # explicit -L wins over the run config
        assert json.load(f)["L"] == 3


def test_verify_report(tmp_path, zero_config):
    out = tmp_path / "verify.json"
    code = main(["verify", "-c", zero_config, "-L", "3", "-g", "101", "-w", "1", "-o", str(out)] + QUIET)
    with open(out) as f:
        report = json.load(f)
    assert code == (0 if report["status"] == "ok" else 1)
    assert {check["name"] for check in report["checks"]} >= {"det C(x) drift", "N^2 = 0", "N strictly lower triangular"}
    assert all(check["passed"] for check in report["checks"]) == (code == 0)


def double_root_report(problem):
    double = eigenvalue_predictor(2, 1, 1) + 0.5
    simple = eigenvalue_predictor(2, 1, 2)

    def sample(column, lams):
        lams = np.asarray(lams, dtype=complex)
        return ScaledComplex((lams - double) ** 2 * (lams - simple), np.zeros(len(lams)))

    return check_class_W(problem, 2, sampler=sample, workers=1)


def test_class_w_violation_exits_with_two(tmp_path, zero_config, monkeypatch):
    def non_simple(problem, levels, workers=None):
        report = double_root_report(problem)
        raise ClassWViolation(f"Non-simple eigenvalues at {report.offending}.", report=report)

    monkeypatch.setattr(hospec.main, "assemble_spectral_data", non_simple)
    data_path = tmp_path / "data.json"
    assert main(["forward", "-c", zero_config, "-L", "2", "-g", "101", "-o", str(data_path)] + QUIET) == 2

    with open(tmp_path / "error_report.json") as f:
        report = json.load(f)
    assert report["error"] == "ClassWViolation"
    assert report["class_w"]["verdict"] is False
    assert report["class_w"]["windings"]["1"][0] == 2


def test_linear_algebra_failure_exits_with_three(tmp_path, zero_config, monkeypatch):
    def singular(problem, levels, workers=None):
        raise LinAlgError("Singular matrix")

    monkeypatch.setattr(hospec.main, "assemble_spectral_data", singular)
    with pytest.raises(SystemExit) as e:
        main(["forward", "-c", zero_config, "-g", "101", "-o", str(tmp_path / "data.json")] + QUIET)
    assert e.value.code == 3

    with open(tmp_path / "error_report.json") as f:
        assert json.load(f)["error"] == "PropagationError"


def test_unreadable_file_exits_with_64(tmp_path, zero_config, monkeypatch):
    def denied(path, grid_points=None):
        raise PermissionError(13, "Permission denied", str(path))

    monkeypatch.setattr(hospec.main, "load_problem", denied)
    with pytest.raises(SystemExit) as e:
        main(["forward", "-c", zero_config, "-o", str(tmp_path / "data.json")] + QUIET)
    assert e.value.code == 64

    with open(tmp_path / "error_report.json") as f:
        report = json.load(f)
    assert report["error"] == "ConfigError"
    assert report["field"] == zero_config
