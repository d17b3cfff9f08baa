"""Small shared helpers: fraction arithmetic, hashing, thread fan-out."""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

# Counts derived from decimal fractions use a guarded floor: 0.3 * 10 is
# 2.999... in binary floats but must floor to 3.  The guard is far below
# any meaningful fraction granularity at supported corpus sizes.
_FLOOR_GUARD = 1e-9


def frac_floor(frac: float, n: int) -> int:
    """floor(frac * n) with decimal-fraction intent preserved."""
    return int(math.floor(frac * n + _FLOOR_GUARD))


def digest_lines(lines: Iterable[str]) -> str:
    """Hex sha256 over newline-joined lines."""
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def thread_count() -> int:
    """Scoring parallelism cap from CURRICULA_THREADS (default: cores)."""
    raw = os.environ.get("CURRICULA_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise ValueError(f"CURRICULA_THREADS must be an integer, got {raw!r}") from exc
        if n < 1:
            raise ValueError(f"CURRICULA_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def chunk_spans(n: int, parts: int) -> list[tuple[int, int]]:
    """Split range(n) into <= parts contiguous, order-preserving spans."""
    parts = max(1, min(parts, n)) if n > 0 else 0
    spans = []
    base = n // parts if parts else 0
    extra = n - base * parts if parts else 0
    start = 0
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        spans.append((start, start + size))
        start += size
    return spans


def thread_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Map fn over items on the scoring thread pool, preserving order.

    Results are identical to a sequential map; threading only changes
    wall time (kernels release the GIL under the jit backend).
    """
    workers = min(thread_count(), max(1, len(items)))
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
