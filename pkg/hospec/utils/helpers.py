import concurrent.futures
import os
from importlib.metadata import PackageNotFoundError, version

from packaging.version import parse as parse_version

from hospec import settings
from hospec.utils.logger import log


def get_hospec_version() -> str:
    try:
        return parse_version(version("hospec"))
    except PackageNotFoundError:
        return parse_version("0.0.0")


def worker_count(requested: int = None) -> int:
    if requested is None:
        requested = settings.workers
    if requested is None:
        requested = os.cpu_count() or 1
    return max(1, int(requested))


def parallel_map(func, items: list, workers: int = None) -> list:
    """Map func over items with a thread pool, keeping input order.

    Exceptions raised by a task propagate to the caller after the pool drains.
    """
    items = list(items)
    workers = worker_count(workers)
    if workers == 1 or len(items) <= 1:
        return [func(item) for item in items]

    results = [None] * len(items)
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(func, item): index for index, item in enumerate(items)}
        for future in concurrent.futures.as_completed(futures):
            index = futures[future]
            try:
                results[index] = future.result()
            except Exception as e:
                log("debug", f"Task {index} failed: {e}")
                for pending in futures:
                    pending.cancel()
                raise
    return results


def complex_to_pair(value: complex) -> list:
    value = complex(value)
    return [value.real, value.imag]


def pair_to_complex(pair) -> complex:
    if isinstance(pair, (int, float)):
        return complex(pair)
    real, imag = pair
    return complex(float(real), float(imag))
