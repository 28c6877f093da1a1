"""
Common utility functions shared across kinspec modules.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "KINSPEC_THREADS"


def thread_count(default: int = 1) -> int:
    """Worker count from KINSPEC_THREADS, falling back to `default`.

    Args:
        default: Value used when the variable is unset or not a positive integer

    Returns:
        Number of worker threads, at least 1
    """
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        return default
    return max(value, 1)


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """Ordered map over `items`, threaded when more than one worker is configured."""
    items = list(items)
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def format_float(value: Any) -> str:
    """Render a number for CSV output with 17 significant digits.

    Args:
        value: float, int, bool, None or anything with __str__

    Returns:
        String form; None becomes the empty string
    """
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value).strip()


def split_list(raw: str) -> list[str]:
    """Split a comma separated config value, dropping empty items."""
    return [item.strip() for item in raw.split(",") if item.strip()]
