"""Random valid junction instances for property tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .intervals import EMPTY, FULL, IntervalSet
from .problem import NodeProblem

_FRACTIONS = (0.0, 0.125, 0.2, 0.25, 1 / 3, 0.4, 0.5, 0.6, 2 / 3, 0.75, 0.8, 0.875, 1.0)


def random_interval(rng: np.random.Generator, max_spans: int = 2) -> IntervalSet:
    """A random restriction interval biased toward lane-like fractions."""
    roll = rng.random()
    if roll < 0.25:
        return FULL
    if roll < 0.45:
        return EMPTY
    spans = []
    for _ in range(int(rng.integers(1, max_spans + 1))):
        u, v = rng.random(2)
        if rng.random() < 0.5:
            u, v = _FRACTIONS[int(u * len(_FRACTIONS))], _FRACTIONS[int(v * len(_FRACTIONS))]
        lo, hi = (u, v) if u <= v else (v, u)
        spans.append((float(lo), float(hi)))
    return IntervalSet(spans)


def random_problem(
    rng: np.random.Generator,
    *,
    M: int | None = None,
    N: int | None = None,
    C: int | None = None,
    max_links: int = 6,
    max_commodities: int = 3,
    full_fifo: bool = False,
    no_fifo: bool = False,
    zero_priority_prob: float = 0.1,
    congested: bool = False,
) -> NodeProblem:
    """Draws a valid problem.

    Demands, supplies and priorities are continuous so exact ties are rare.
    Split rows get random zeros to exercise missing movements; some inputs
    get zero priority to exercise the equal-share reset.
    """
    M = int(rng.integers(1, max_links + 1)) if M is None else M
    N = int(rng.integers(1, max_links + 1)) if N is None else N
    C = int(rng.integers(1, max_commodities + 1)) if C is None else C

    demand = rng.uniform(0.0, 1000.0, size=(M, C))
    demand[rng.random((M, C)) < 0.1] = 0.0
    split = rng.random((M, N, C))
    split[rng.random((M, N, C)) < 0.3] = 0.0
    for i in range(M):
        for c in range(C):
            if split[i, :, c].sum() <= 0:
                split[i, int(rng.integers(N)), c] = 1.0
            split[i, :, c] /= split[i, :, c].sum()
    total_in = demand.sum()
    hi = total_in / N if congested else 1.2 * total_in / N + 1.0
    supply = rng.uniform(0.0, max(hi, 1.0), size=N)
    priority = rng.uniform(0.1, 10.0, size=M)
    priority[rng.random(M) < zero_priority_prob] = 0.0
    capacity = demand.sum(axis=1) * rng.uniform(1.05, 3.0, size=M) + 1.0

    eta = []
    for _ in range(M):
        block = []
        for a in range(N):
            row = []
            for b in range(N):
                if a == b or full_fifo:
                    row.append(FULL)
                elif no_fifo:
                    row.append(EMPTY)
                else:
                    row.append(random_interval(rng))
            block.append(tuple(row))
        eta.append(tuple(block))
    return NodeProblem.create(demand, split, supply, priority, capacity=capacity,
                              restriction=tuple(eta))
