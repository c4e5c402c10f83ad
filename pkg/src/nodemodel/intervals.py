"""Finite unions of closed subintervals of the unit interval.

Restriction intervals describe which fraction of a movement's demand gets
stuck behind a queue for another movement. They are small sets of spans such
as ``[0, 0.2] ∪ [0.6, 1]``, so a sorted tuple of disjoint spans is all the
structure needed.

Example:
    >>> a = IntervalSet.make([(0.6, 1.0), (0.0, 0.2)])
    >>> a.spans
    ((0.0, 0.2), (0.6, 1.0))
    >>> round(a.measure(), 12)
    0.6
    >>> (a | IntervalSet.make([(0.2, 0.6)])).is_full()
    True
"""

from __future__ import annotations

from collections.abc import Iterable

Span = tuple[float, float]


class IntervalSet:
    """Immutable, normalized union of closed spans inside ``[0, 1]``.

    Spans are sorted, pairwise disjoint and never touch: overlapping or
    adjacent spans are merged on construction. Zero-length spans are dropped,
    so a degenerate set is simply empty.
    """

    __slots__ = ("_spans", "_measure")

    def __init__(self, spans: Iterable[Span] = ()) -> None:
        norm = _normalize(spans)
        self._spans: tuple[Span, ...] = norm
        self._measure = sum(hi - lo for lo, hi in norm)

    @classmethod
    def make(cls, spans: Iterable[Span]) -> IntervalSet:
        """Builds a normalized set, raising ``ValueError`` on bad endpoints."""
        return cls(spans)

    @classmethod
    def _trusted(cls, spans: tuple[Span, ...]) -> IntervalSet:
        obj = cls.__new__(cls)
        obj._spans = spans
        obj._measure = sum(hi - lo for lo, hi in spans)
        return obj

    @property
    def spans(self) -> tuple[Span, ...]:
        return self._spans

    def measure(self) -> float:
        """Total length of the set."""
        return self._measure

    def is_full(self) -> bool:
        """True iff the set is exactly ``[0, 1]``."""
        return self._spans == ((0.0, 1.0),)

    def is_empty(self) -> bool:
        return not self._spans

    def union(self, other: IntervalSet) -> IntervalSet:
        if not other._spans:
            return self
        if not self._spans:
            return other
        return IntervalSet._trusted(_merge(sorted(self._spans + other._spans)))

    def intersection(self, other: IntervalSet) -> IntervalSet:
        out: list[Span] = []
        a, b = self._spans, other._spans
        i = j = 0
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if hi > lo:
                out.append((lo, hi))
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return IntervalSet._trusted(tuple(out))

    def intersect_measure(self, other: IntervalSet) -> float:
        """Length of the intersection with ``other``."""
        a, b = self._spans, other._spans
        if not a or not b:
            return 0.0
        if len(a) == 1 and a[0] == (0.0, 1.0):
            return other._measure
        if len(b) == 1 and b[0] == (0.0, 1.0):
            return self._measure
        total = 0.0
        i = j = 0
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if hi > lo:
                total += hi - lo
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return total

    def contains(self, x: float) -> bool:
        return any(lo <= x <= hi for lo, hi in self._spans)

    __or__ = union
    __and__ = intersection

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IntervalSet):
            return NotImplemented
        return self._spans == other._spans

    def __hash__(self) -> int:
        return hash(self._spans)

    def __repr__(self) -> str:
        if not self._spans:
            return "IntervalSet(∅)"
        inner = " ∪ ".join(f"[{lo:g}, {hi:g}]" for lo, hi in self._spans)
        return f"IntervalSet({inner})"

    def to_json(self) -> list[list[float]]:
        return [[lo, hi] for lo, hi in self._spans]

    @classmethod
    def from_json(cls, data: Iterable[Iterable[float]]) -> IntervalSet:
        spans = []
        for pair in data:
            pair = list(pair)
            if len(pair) != 2:
                raise ValueError(f"interval must be a [lo, hi] pair, got {pair!r}")
            spans.append((pair[0], pair[1]))
        return cls(spans)


def _normalize(spans: Iterable[Span]) -> tuple[Span, ...]:
    clean: list[Span] = []
    for span in spans:
        lo, hi = float(span[0]), float(span[1])
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"span ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 1")
        if hi > lo:
            clean.append((lo, hi))
    clean.sort()
    return _merge(clean)


def _merge(sorted_spans: list[Span]) -> tuple[Span, ...]:
    out: list[Span] = []
    for lo, hi in sorted_spans:
        if out and lo <= out[-1][1]:
            if hi > out[-1][1]:
                out[-1] = (out[-1][0], hi)
        else:
            out.append((lo, hi))
    return tuple(out)


EMPTY = IntervalSet()
FULL = IntervalSet([(0.0, 1.0)])


def make(spans: Iterable[Span]) -> IntervalSet:
    """Module-level alias for :meth:`IntervalSet.make`."""
    return IntervalSet(spans)
