"""Order-preserving fan-out of per-record work over worker processes."""

from __future__ import annotations

import itertools
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Iterator, TypeVar

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_BATCH = 1024


def batched(items: Iterable[T], size: int) -> Iterator[list[T]]:
    it = iter(items)
    while batch := list(itertools.islice(it, size)):
        yield batch


def ordered_map(fn: Callable[[list[T]], list[R]], items: Iterable[T], workers: int = 1,
                batch_size: int = DEFAULT_BATCH, initializer: Callable | None = None,
                initargs: tuple = ()) -> Iterator[R]:
    """Apply ``fn`` to batches of ``items`` and yield results in input order.

    At most ``2 * workers`` batches are in flight, so memory stays bounded by
    the batch size rather than the input length. ``fn`` and ``initializer``
    must be picklable module-level callables when ``workers > 1``.
    """
    if workers <= 1:
        if initializer is not None:
            initializer(*initargs)
        for batch in batched(items, batch_size):
            yield from fn(batch)
        return
    with ProcessPoolExecutor(max_workers=workers, initializer=initializer, initargs=initargs) as pool:
        pending: deque = deque()
        for batch in batched(items, batch_size):
            pending.append(pool.submit(fn, batch))
            if len(pending) >= 2 * workers:
                yield from pending.popleft().result()
        while pending:
            yield from pending.popleft().result()
