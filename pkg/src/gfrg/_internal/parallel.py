from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

from gfrg._internal.errors import ConfigError

_T = TypeVar("_T")

THREADS_ENV = "GFRG_THREADS"
"""Environment variable read when no worker count is given."""


def resolve_threads(threads: int | None = None) -> int:
    """Worker count from the argument, then `GFRG_THREADS`, then 1.

    Args:
        threads: Explicit worker count.

    Returns:
        A positive worker count.

    Raises:
        ConfigError: If the resolved value is not a positive integer.
    """
    if threads is None:
        raw = os.getenv(THREADS_ENV, "1")
        try:
            threads = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV}={raw!r} is not an integer") from exc
    if threads < 1:
        raise ConfigError(f"thread count must be positive, got {threads}")
    return threads


def chunk_slices(total: int, chunk_size: int) -> list[slice]:
    """Split `range(total)` into consecutive slices of at most `chunk_size` items.

    Args:
        total: Number of items.
        chunk_size: Maximum slice length.

    Returns:
        The slices in order.
    """
    chunk_size = max(1, chunk_size)
    return [slice(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]


def map_chunks(function: Callable[[slice], _T], total: int, chunk_size: int, threads: int = 1) -> list[_T]:
    """Apply `function` to fixed chunks of `range(total)`, keeping chunk order.

    Chunk boundaries depend only on `total` and `chunk_size`, so the
    concatenated result does not depend on the worker count.

    Args:
        function: Called with one slice per chunk.
        total: Number of items.
        chunk_size: Items per chunk.
        threads: Worker count; 1 runs inline.

    Returns:
        One result per chunk, in chunk order.
    """
    slices = chunk_slices(total, chunk_size)
    if threads <= 1 or len(slices) <= 1:
        return [function(part) for part in slices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(function, slices))
