"""States as integer bit masks over element indices 0..N-1.

A state is the set of elements already added to the object under
construction.  Masks are canonical (set equality == integer equality),
hashable, and cheap to test for subset relations, which the bound index
does in its inner loop.
"""

from __future__ import annotations

from collections.abc import Iterable

EMPTY: int = 0


def mask_of(members: Iterable[int]) -> int:
    m = 0
    for e in members:
        m |= 1 << e
    return m


def members_of(mask: int) -> tuple[int, ...]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return tuple(out)


def size(mask: int) -> int:
    return mask.bit_count()


def contains(mask: int, element: int) -> bool:
    return bool(mask >> element & 1)


def add(mask: int, element: int) -> int:
    return mask | 1 << element


def remove(mask: int, element: int) -> int:
    return mask & ~(1 << element)


def is_subset(a: int, b: int) -> bool:
    """True when a ⊆ b."""
    return a & b == a


def is_proper_subset(a: int, b: int) -> bool:
    return a != b and a & b == a
