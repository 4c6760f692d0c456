"""
Parallel helpers.

Order-preserving map over independent per-view work. Reductions stay with the
caller, which consumes results in input order.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """
    Apply fn to every item, returning results in input order.

    Args:
        fn: Pure function
        items: Inputs
        threads: Worker threads, 1 runs inline

    Returns:
        List[R]: Results in input order
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
