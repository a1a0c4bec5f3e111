"""Delta debugging (ddmin) over command lists."""

from __future__ import annotations

from typing import Callable, List, Sequence, TypeVar

T = TypeVar("T")


def shrink(items: Sequence[T], fails: Callable[[List[T]], bool], max_tests: int = 2000) -> List[T]:
    """Return a 1-minimal sublist (order kept) for which ``fails`` still holds.

    ``fails(list(items))`` is assumed true. Stops early after ``max_tests``
    probes and returns the smallest failing list found so far.
    """
    current = list(items)
    n = 2
    tests = 0
    while len(current) >= 2 and tests < max_tests:
        chunk = max(1, len(current) // n)
        reduced = False
        for start in range(0, len(current), chunk):
            complement = current[:start] + current[start + chunk:]
            tests += 1
            if complement and fails(complement):
                current = complement
                n = max(n - 1, 2)
                reduced = True
                break
            if tests >= max_tests:
                break
        if not reduced:
            if chunk == 1:
                break
            n = min(len(current), n * 2)
    return current
