import os
from pathlib import Path

from hospec import settings
from hospec.errors import ConfigError
from hospec.utils.logger import log


def create_directory_if_not_exists(directory_path: Path):
    # Check if the directory already exists
    if not os.path.exists(directory_path):
        try:
            os.makedirs(directory_path)
            log("debug", f"Created directory: {directory_path}")
        except Exception as e:
            raise ConfigError(
                f"Could not create directory {directory_path}. {e}", field="out"
            )


def resolve_output_path(out_path: str, default_name: str) -> Path:
    """Explicit --out wins, otherwise the file lands in the outputs directory."""
    if out_path:
        path = Path(out_path)
        if not path.is_absolute():
            path = settings.project_root / path
        return path.resolve()
    return (Path(settings.outputs_dir) / default_name).resolve()


def ensure_distinct_paths(inputs: list, output: Path):
    for input_path in inputs:
        if input_path and Path(input_path).resolve() == Path(output).resolve():
            raise ConfigError(
                f"Output path {output} would overwrite an input file.", field="out"
            )


def ensure_readable(path: str, field: str) -> Path:
    if not path:
        raise ConfigError(f"Missing required --{field} path.", field=field)
    resolved = Path(path)
    if not resolved.is_file():
        raise ConfigError(f"File not found: {path}", field=field)
    return resolved
