import csv
import json
from pathlib import Path

import numpy as np
from prettytable import PrettyTable

from hospec.utils.filesystem import create_directory_if_not_exists


def save_as_json(file_path: Path, json_data: dict):
    create_directory_if_not_exists(Path(file_path).parent)
    with open(file_path, "w") as outfile:
        json.dump(json_data, outfile, indent=4)


def save_as_csv(file_path: Path, grid: np.ndarray, columns: dict):
    """One row per grid node: x, then every column in insertion order."""
    create_directory_if_not_exists(Path(file_path).parent)
    names = list(columns)
    with open(file_path, "w", newline="") as outfile:
        writer = csv.writer(outfile)
        writer.writerow(["x"] + names)
        for i, x in enumerate(grid):
            writer.writerow(["%.17g" % x] + ["%.17g" % columns[name][i] for name in names])


def draw_identity_table(checks: list) -> str:
    table = PrettyTable()
    table.field_names = ["Identity", "Max violation", "Threshold", "Samples", "Verdict"]
    for check in checks:
        table.add_row(
            [
                check["name"],
                f"{check['violation']:.3e}",
                f"{check['threshold']:.1e}",
                check.get("samples", ""),
                "pass" if check["passed"] else "FAIL",
            ]
        )
    passed = sum(1 for check in checks if check["passed"])
    table.add_row(["", "", "", "", ""])
    table.add_row([f"Total {len(checks)} check{'s' if len(checks) != 1 else ''}", "", "", "", f"{passed} passed"])
    return table.get_string()


def draw_error_table(errors: dict, steps: list = None) -> str:
    """Relative L2 errors per recovered coefficient, plus step diagnostics when available."""
    table = PrettyTable()
    table.field_names = ["Coefficient", "Relative L2 error", "Series tail", "Max residual"]
    by_name = {}
    for step in steps or []:
        for name in str(step["coefficient"]).split(", "):
            by_name[name] = step
    for name, error in errors.items():
        step = by_name.get(name, {})
        table.add_row(
            [
                name,
                f"{error:.3e}" if error is not None else "-",
                f"{step['tail']:.3e}" if "tail" in step else "-",
                f"{step['max_residual']:.3e}" if "max_residual" in step else "-",
            ]
        )
    return table.get_string()
