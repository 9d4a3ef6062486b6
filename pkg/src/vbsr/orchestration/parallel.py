from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import TypeVar

from vbsr.utils.params import default_workers

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class ParallelRunner:
    """Run independent experiment cells in worker processes (CPU-bound dense algebra)."""

    def __init__(self, max_workers: int | None = None) -> None:
        self.max_workers = max_workers or default_workers()

    def map(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        """Apply ``fn`` to every item; results keep the input order.

        ``fn`` must be picklable when more than one worker is used.
        """
        if self.max_workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]

        logger.info("Running %d cells on %d workers", len(items), self.max_workers)
        results: list[R] = [None] * len(items)  # type: ignore[list-item]
        with ProcessPoolExecutor(max_workers=self.max_workers) as ex:
            futures = {ex.submit(fn, item): idx for idx, item in enumerate(items)}
            for fut in as_completed(futures):
                idx = futures[fut]
                results[idx] = fut.result()
        return results
