from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml
from scipy.interpolate import CubicSpline

from hospec import settings
from hospec.errors import ConfigError, HospecError
from hospec.forward_spectral import SpectralDataSet
from hospec.operator_core import (
    BoundaryConfig,
    CoefficientSet,
    ProblemDefinition,
    build_problem,
    coefficient_names,
    validate_class,
    default_boundary,
    uniform_grid,
)
from hospec.utils.logger import log

TOKEN_KINDS = ("const", "poly", "sin", "cos")

# Long option name -> args attribute.
RUN_CONFIG_KEYS = {
    "command": "command",
    "config": "config_path",
    "data": "data_path",
    "model": "model_path",
    "truth": "truth_path",
    "out": "out_path",
    "levels": "levels",
    "truncation": "truncation",
    "grid": "grid_points",
    "workers": "workers",
    "diagnostics": "diagnostics",
    "no": "no",
    "debug": "debug",
}


def read_document(path, field: str = "config") -> dict:
    """YAML (or JSON) document at path as a dict."""
    try:
        with open(path, "r") as f:
            document = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"File not found: {path}", field=field)
    except yaml.YAMLError as e:
        raise ConfigError(f"Could not parse {path}: {e}", field=field)
    if not isinstance(document, dict):
        raise ConfigError(f"{path} does not hold a mapping.", field=field)
    return document


def parse_frequency(value, field: str) -> float:
    try:
        return float(Fraction(str(value).replace(" ", "")))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"Invalid frequency '{value}'.", field=field)


def evaluate_tokens(tokens: list, grid: np.ndarray, field: str) -> np.ndarray:
    """Sum of [kind, coefficient, parameter] terms on the grid.

    poly takes the power, sin/cos a rational frequency multiplying pi x.
    """
    if not isinstance(tokens, list) or not tokens:
        raise ConfigError("Expression needs a non-empty list of terms.", field=field)
    total = np.zeros(len(grid))
    for term in tokens:
        if not isinstance(term, list) or len(term) not in (2, 3):
            raise ConfigError(f"Malformed term {term}.", field=field)
        kind, coefficient = term[0], term[1]
        parameter = term[2] if len(term) == 3 else None
        if kind not in TOKEN_KINDS:
            raise ConfigError(f"Unknown term kind '{kind}'.", field=field)
        try:
            coefficient = float(coefficient)
        except (TypeError, ValueError):
            raise ConfigError(f"Invalid coefficient '{coefficient}'.", field=field)

        match kind:
            case "const":
                total += coefficient
            case "poly":
                if not isinstance(parameter, int) or parameter < 0:
                    raise ConfigError(f"Polynomial power must be a natural number, got {parameter}.", field=field)
                total += coefficient * grid**parameter
            case "sin":
                total += coefficient * np.sin(parse_frequency(parameter, field) * np.pi * grid)
            case "cos":
                total += coefficient * np.cos(parse_frequency(parameter, field) * np.pi * grid)
    return total


def parse_coefficients(entries: dict, grid: np.ndarray, order: int, kind: str) -> dict:
    allowed = coefficient_names(order, kind)
    values = {}
    for name, entry in (entries or {}).items():
        field = f"coefficients.{name}"
        if name not in allowed:
            raise ConfigError(
                f"Coefficient '{name}' does not belong to class {kind} (expected one of {allowed}).",
                field=field,
            )
        if not isinstance(entry, dict):
            raise ConfigError("Coefficient entries need a 'kind'.", field=field)
        match entry.get("kind"):
            case "expr":
                values[name] = evaluate_tokens(entry.get("tokens"), grid, field)
            case "samples":
                try:
                    samples = np.asarray(entry.get("data"), dtype=float)
                except (TypeError, ValueError):
                    raise ConfigError("Samples must be a list of numbers.", field=field)
                if samples.ndim != 1 or len(samples) < 17:
                    raise ConfigError("Samples need at least 17 values.", field=field)
                if len(samples) != len(grid):
                    log("info", f"Resampling {name} from {len(samples)} to {len(grid)} nodes.")
                    samples = CubicSpline(uniform_grid(len(samples)), samples)(grid)
                values[name] = samples
            case other:
                raise ConfigError(f"Unknown coefficient kind '{other}'.", field=field)
    return values


def parse_boundary(document, order: int) -> BoundaryConfig:
    if not document:
        return default_boundary(order)
    if not isinstance(document, dict) or "p0" not in document or "p1" not in document:
        raise ConfigError("Boundary needs p0 and p1 exponent lists.", field="boundary")
    u0 = document.get("U0")
    u1 = document.get("U1")
    try:
        return BoundaryConfig.from_exponents(
            tuple(document["p0"]),
            tuple(document["p1"]),
            None if u0 is None else np.asarray(u0, dtype=float),
            None if u1 is None else np.asarray(u1, dtype=float),
        )
    except HospecError as e:
        raise ConfigError(e.message, field="boundary")


def parse_problem(document: dict, grid_points: int = None) -> ProblemDefinition:
    order = document.get("n")
    if not isinstance(order, int):
        raise ConfigError("Operator order 'n' must be an integer.", field="n")
    kind = document.get("class")
    if kind is None:
        raise ConfigError("Missing coefficient 'class'.", field="class")
    grid_points = grid_points or document.get("grid_points") or settings.grid_points
    if not isinstance(grid_points, int) or grid_points < 17:
        raise ConfigError(f"grid_points must be an integer of at least 17, got {grid_points}.", field="grid_points")

    try:
        validate_class(order, kind)
    except HospecError as e:
        raise ConfigError(e.message, field="class")
    grid = uniform_grid(grid_points)
    values = parse_coefficients(document.get("coefficients"), grid, order, kind)
    coefficients = CoefficientSet.from_samples(order, kind, grid, values)
    for name, mean in coefficients.normalization.items():
        if abs(mean) > 1e-10:
            log("info", f"Shifted {name} by {-mean:.6g} to zero mean.")
    return build_problem(coefficients, parse_boundary(document.get("boundary"), order))


def load_problem(path, grid_points: int = None, field: str = "config") -> ProblemDefinition:
    problem = parse_problem(read_document(path, field), grid_points)
    log("debug", f"Loaded order {problem.order} {problem.coefficients.kind} problem from {path}.")
    return problem


def load_spectral_data(path) -> SpectralDataSet:
    document = read_document(path, "data")
    try:
        return SpectralDataSet.from_dict(document)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Malformed spectral data in {path}: {e}", field="data")


def load_run_config(path) -> dict:
    """Run config entries keyed by args attribute name."""
    document = read_document(path, "run-config")
    options = {}
    for key, value in document.items():
        name = str(key).replace("_", "-")
        dest = RUN_CONFIG_KEYS.get(name) or RUN_CONFIG_KEYS.get(name.replace("-", "_"))
        if dest is None:
            raise ConfigError(f"Unknown run config option '{key}'.", field=f"run-config.{key}")
        if dest.endswith("_path") and value is not None:
            value = str(Path(path).parent / value) if not Path(value).is_absolute() else value
        options[dest] = value
    return options

