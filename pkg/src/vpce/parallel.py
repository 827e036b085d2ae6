"""Deterministic fixed-chunk thread mapping.

Worker-count independence is achieved by construction: the input is cut
into chunks of a FIXED size (never a function of the worker count), each
chunk is processed independently, and results are combined in chunk-index
order. Threads only change which chunk runs where, never what any chunk
computes, so outputs are bit-identical for 1, 2, or N workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

CHUNK = 2048

T = TypeVar("T")


def chunk_ranges(n: int, chunk: int = CHUNK) -> list[tuple[int, int]]:
    """Half-open [start, stop) ranges covering 0..n in fixed-size chunks."""
    return [(s, min(s + chunk, n)) for s in range(0, max(n, 0), chunk)]


def run_chunked(fn: Callable[[int, int], T], n: int, workers: int = 1,
                chunk: int = CHUNK) -> list[T]:
    """Apply ``fn(start, stop)`` to every chunk; return results in chunk order.

    ``fn`` must be a pure function of its range (it may read shared arrays);
    per-chunk results are returned in deterministic chunk-index order
    regardless of ``workers``.
    """
    ranges = chunk_ranges(n, chunk)
    if workers <= 1 or len(ranges) <= 1:
        return [fn(s, e) for s, e in ranges]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, s, e) for s, e in ranges]
        return [f.result() for f in futures]


def map_indexed(fn: Callable[[int], T], items: Sequence, workers: int = 1,
                chunk: int = 64) -> list[T]:
    """Map ``fn`` over item indices, preserving order, chunked as above."""
    out: list[T | None] = [None] * len(items)

    def do_range(s: int, e: int) -> None:
        for i in range(s, e):
            out[i] = fn(i)

    run_chunked(do_range, len(items), workers=workers, chunk=chunk)
    return out  # type: ignore[return-value]
