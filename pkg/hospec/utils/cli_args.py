import argparse

parser = argparse.ArgumentParser(
    prog="hospec",
    description="Forward and inverse spectral problems for higher-order ODE operators",
)

parser.add_argument(
    "command",
    type=str,
    nargs="?",
    choices=["forward", "invert", "roundtrip", "verify"],
    help="forward: coefficients to spectral data, invert: spectral data to coefficients, "
    "roundtrip: both with error report, verify: structural identity suite",
)
parser.add_argument(
    "-c",
    "--config",
    dest="config_path",
    type=str,
    help="Path to a coefficient/problem file (JSON or YAML)",
)
parser.add_argument(
    "-D",
    "--data",
    dest="data_path",
    type=str,
    help="Path to a spectral_data.json file (invert)",
)
parser.add_argument(
    "-m",
    "--model",
    dest="model_path",
    type=str,
    help="Path to a model problem file, if not supplied the default model for the class is used",
)
parser.add_argument(
    "-t",
    "--truth",
    dest="truth_path",
    type=str,
    help="Ground-truth problem file used to report reconstruction errors (invert)",
)
parser.add_argument(
    "-o",
    "--out",
    dest="out_path",
    type=str,
    help="Output file path, defaults to a file inside the outputs directory",
)
parser.add_argument(
    "-L",
    "--levels",
    dest="levels",
    type=int,
    help="Number of eigenvalue levels per column",
)
parser.add_argument(
    "-N",
    "--truncation",
    dest="truncation",
    type=int,
    help="Truncation level of the main equation",
)
parser.add_argument(
    "-g",
    "--grid",
    dest="grid_points",
    type=int,
    help="Number of uniform grid nodes on [0, 1]",
)
parser.add_argument(
    "-w",
    "--workers",
    dest="workers",
    type=int,
    help="Worker threads, defaults to the CPU count",
)
parser.add_argument(
    "-r",
    "--run-config",
    dest="run_config_path",
    type=str,
    help="YAML file with default values for any of the long options",
)
parser.add_argument(
    "--diagnostics",
    dest="diagnostics",
    action="store_true",
    help="Compute condition estimates and series tails per grid node",
)
parser.add_argument(
    "-n",
    "--no",
    dest="no",
    type=str,
    nargs="+",
    default=[],
    help="Exclude logging output types (e.g. info warning success report)",
)
parser.add_argument(
    "-d",
    "--debug",
    dest="debug",
    action="store_true",
    help="Print debug output",
)
parser.add_argument(
    "-v",
    "--version",
    dest="version",
    action="store_true",
    help="Print current hospec version",
)

# Defaults only, main() parses the real command line.
args = parser.parse_args([])
