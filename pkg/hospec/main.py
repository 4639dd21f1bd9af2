import sys
from pathlib import Path

from numpy.linalg import LinAlgError

import hospec.settings as settings
from hospec.config import load_problem, load_run_config, load_spectral_data
from hospec.errors import ClassWViolation, ConfigError, HospecError, PropagationError
from hospec.forward_spectral import SpectralDataSet, assemble_spectral_data
from hospec.reconstruction import reconstruct, relative_l2_error
from hospec.utils.cli_args import args, parser
from hospec.utils.filesystem import (
    create_directory_if_not_exists,
    ensure_distinct_paths,
    ensure_readable,
    resolve_output_path,
)
from hospec.utils.helpers import get_hospec_version
from hospec.utils.logger import log
from hospec.utils.outputs import (
    draw_error_table,
    draw_identity_table,
    save_as_csv,
    save_as_json,
)
from hospec.verification import run_identity_suite


def apply_arguments(argv=None):
    """Parse argv into the shared args object, with run config values under explicit flags."""
    defaults = vars(parser.parse_args([]))
    parsed = vars(parser.parse_args(argv))
    for key, value in parsed.items():
        setattr(args, key, value)
    if args.run_config_path:
        for key, value in load_run_config(args.run_config_path).items():
            if parsed.get(key) == defaults.get(key):
                setattr(args, key, value)


def output_directory() -> Path:
    if args.out_path:
        return resolve_output_path(args.out_path, "").parent
    return Path(settings.outputs_dir)


def cmd_forward() -> tuple[int, SpectralDataSet]:
    config_path = ensure_readable(args.config_path, "config")
    out = resolve_output_path(args.out_path, "spectral_data.json")
    ensure_distinct_paths([config_path], out)

    problem = load_problem(config_path, args.grid_points)
    levels = args.levels or settings.levels
    log("info", f"Computing {levels} levels for {problem.order - 1} columns of {config_path}.")
    try:
        data = assemble_spectral_data(problem, levels, args.workers)
    except ClassWViolation as e:
        if e.partial is not None:
            save_as_json(out, e.partial.to_dict())
            log("warning", f"Spectral data with class W flags saved to {out}")
        raise

    save_as_json(out, data.to_dict())
    log("success", f"Spectral data saved to {out}")
    return 0, data


def cmd_invert(data: SpectralDataSet = None) -> int:
    inputs = []
    if data is None:
        inputs.append(ensure_readable(args.data_path, "data"))
        data = load_spectral_data(inputs[0])
    out = resolve_output_path(args.out_path, "reconstruction.csv")
    if args.command == "roundtrip" and args.out_path:
        out = out.with_name(f"{out.stem}_reconstruction.csv")
    ensure_distinct_paths(inputs + [args.model_path, args.truth_path], out)

    grid_points = args.grid_points or data.metadata.get("grid_points") or settings.grid_points
    truncation = args.truncation or settings.truncation
    model_problem = None
    if args.model_path:
        model_problem = load_problem(ensure_readable(args.model_path, "model"), grid_points, "model")
        if model_problem.order != data.order:
            raise ConfigError(
                f"Model has order {model_problem.order}, the spectral data order {data.order}.",
                field="model",
            )
        if model_problem.coefficients.kind != "n3-mixed":
            log("warning", "Stepwise reconstructions rebuild their own models, ignoring --model.")
            model_problem = None

    result = reconstruct(
        data,
        truncation,
        grid_points,
        kind=model_problem.coefficients.kind if model_problem else None,
        model_problem=model_problem,
        workers=args.workers,
        diagnostics=args.diagnostics,
    )
    save_as_csv(out, result.grid, result.coefficients)

    report = {"status": "ok", "class": result.kind, "steps": result.steps}
    if args.truth_path:
        truth = load_problem(ensure_readable(args.truth_path, "truth"), grid_points, "truth")
        errors = {
            name: relative_l2_error(values, truth.coefficients.coefficient(name), result.grid)
            for name, values in result.coefficients.items()
        }
        report["errors"] = errors
        if "report" not in args.no:
            print(draw_error_table(errors, result.steps))
    save_as_json(out.with_name(f"{out.stem}_report.json"), report)
    log("success", f"Recovered {', '.join(result.coefficients)} saved to {out}")
    return 0


def cmd_roundtrip() -> int:
    if not args.truth_path:
        args.truth_path = args.config_path
    _, data = cmd_forward()
    return cmd_invert(data)


def cmd_verify() -> int:
    config_path = ensure_readable(args.config_path, "config")
    out = resolve_output_path(args.out_path, "verify_report.json")
    ensure_distinct_paths([config_path], out)

    problem = load_problem(config_path, args.grid_points)
    checks = [check.to_dict() for check in run_identity_suite(problem, args.levels or 4, workers=args.workers)]
    passed = all(check["passed"] for check in checks)
    save_as_json(out, {"status": "ok" if passed else "failed", "checks": checks})

    log("report", checks)
    if "report" not in args.no:
        print(draw_identity_table(checks))
    if not passed:
        log("warning", f"Identity suite failed, details in {out}")
        return 1
    log("success", f"All identities hold, report saved to {out}")
    return 0


def run(argv=None) -> int:
    apply_arguments(argv)
    if args.version:
        print(get_hospec_version())
        return 0
    if not args.command:
        parser.print_help()
        return 0

    create_directory_if_not_exists(settings.outputs_dir)
    log("debug", f"Command: {args.command}, outputs in {output_directory()}")
    match args.command:
        case "forward":
            return cmd_forward()[0]
        case "invert":
            return cmd_invert()
        case "roundtrip":
            return cmd_roundtrip()
        case "verify":
            return cmd_verify()


def run_guarded(argv=None) -> int:
    """run(), with library and filesystem failures mapped onto the hospec error kinds."""
    try:
        return run(argv)
    except LinAlgError as e:
        raise PropagationError(f"Linear algebra failure: {e}") from e
    except OSError as e:
        field = str(e.filename) if e.filename else None
        raise ConfigError(f"Cannot access file: {e.strerror or e}", field=field) from e


def main(argv=None) -> int:
    try:
        return run_guarded(argv)
    except HospecError as e:
        try:
            save_as_json(output_directory() / "error_report.json", e.to_dict())
        except (HospecError, OSError):
            pass
        if isinstance(e, ClassWViolation):
            log("warning", e.message)
            return e.exit_code
        location = f" ({e.field})" if e.field else ""
        log("error", f"{e.message}{location}", sorry=e.exit_code == 3, exit_code=e.exit_code)


if __name__ == "__main__":
    sys.exit(main())
