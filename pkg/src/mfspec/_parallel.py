"""Deterministic work distribution.

Work is always split into a fixed sequence of items independent of the worker
count; workers only change who computes an item, never the item boundaries or
the merge order. Results are therefore bit-identical for any `shards` value.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Iterator, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Sequence[T], shards: int = 1) -> list[R]:
    """Apply `fn` to every item, returning results in item order."""
    if shards <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=shards) as pool:
        return list(pool.map(fn, items))


def batched(items: Iterable[T], size: int) -> Iterator[list[T]]:
    """Consume an iterable in fixed-size batches (last batch may be short)."""
    batch: list[T] = []
    for item in items:
        batch.append(item)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch
