"""Data model for a single junction: demands, splits, supplies, priorities.

Units follow the node-model convention of "vehicles per time step": every
demand, supply and flow is an amount that may cross the junction during one
solver call. Indices are zero-based throughout the API; human-facing labels
live in ``input_ids`` and ``output_ids``.

Array shapes:
    demand      (M, C)      vehicles of commodity c wanting to leave input i
    split       (M, N, C)   fraction of those heading to output j
    supply      (N,)        vehicles output j can accept
    priority    (M,)        non-negative ratio-scale weights
    capacity    (M,)        optional input capacities, same unit as demand
    restriction [i][j'][j]  IntervalSet: share of movement (i, j) blocked when
                            output j' runs out of supply
"""

from __future__ import annotations

import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from .intervals import FULL, IntervalSet

SPLIT_TOL = 1e-12

Restriction = tuple[tuple[tuple[IntervalSet, ...], ...], ...]


class ValidationError(ValueError):
    """Raised when a problem fails validation; carries the violation list."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        lines = "; ".join(v.message for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"invalid node problem: {lines}{more}")


class DemandPriorityWarning(UserWarning):
    """Priorities derived from demand break invariance under demand changes."""


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    index: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {"code": self.code, "message": self.message, "index": list(self.index)}


@dataclass(frozen=True, eq=False)
class NodeProblem:
    """One junction at one instant."""

    demand: np.ndarray
    split: np.ndarray
    supply: np.ndarray
    priority: np.ndarray
    restriction: Restriction
    capacity: np.ndarray | None = None
    input_ids: tuple[str, ...] = ()
    output_ids: tuple[str, ...] = ()

    @property
    def M(self) -> int:
        return self.demand.shape[0]

    @property
    def N(self) -> int:
        return self.supply.shape[0]

    @property
    def C(self) -> int:
        return self.demand.shape[1]

    @classmethod
    def create(
        cls,
        demand,
        split,
        supply,
        priority,
        *,
        capacity=None,
        restriction=None,
        input_ids: Sequence[str] | None = None,
        output_ids: Sequence[str] | None = None,
    ) -> NodeProblem:
        """Builds a problem from array-likes.

        ``demand`` may be 1-D for single-commodity problems, in which case
        ``split`` may be 2-D. ``restriction`` is either a nested ``[i][j'][j]``
        sequence or a sparse mapping ``{(i, j_from, j_to): IntervalSet}``;
        anything not given defaults to the full interval.
        """
        demand = np.asarray(demand, dtype=float)
        split = np.asarray(split, dtype=float)
        if demand.ndim == 1:
            demand = demand[:, None]
            if split.ndim == 2:
                split = split[:, :, None]
        supply = np.asarray(supply, dtype=float).reshape(-1)
        priority = np.asarray(priority, dtype=float).reshape(-1)
        cap = None if capacity is None else np.asarray(capacity, dtype=float).reshape(-1)
        M, N = demand.shape[0], supply.shape[0]
        eta = build_restriction(M, N, restriction)
        in_ids = tuple(input_ids) if input_ids is not None else tuple(str(i + 1) for i in range(M))
        out_ids = (
            tuple(output_ids) if output_ids is not None else tuple(str(M + j + 1) for j in range(N))
        )
        return cls(demand, split, supply, priority, eta, cap, in_ids, out_ids)

    def with_priority(self, priority) -> NodeProblem:
        return replace(self, priority=np.asarray(priority, dtype=float).reshape(-1))

    def with_demand(self, demand) -> NodeProblem:
        return replace(self, demand=np.asarray(demand, dtype=float).reshape(self.demand.shape))

    def with_supply(self, supply) -> NodeProblem:
        return replace(self, supply=np.asarray(supply, dtype=float).reshape(-1))

    def permuted(self, input_order: Sequence[int], output_order: Sequence[int]) -> NodeProblem:
        """Relabels links: new input ``k`` is old input ``input_order[k]``."""
        io, oo = list(input_order), list(output_order)
        eta = tuple(
            tuple(tuple(self.restriction[i][a][b] for b in oo) for a in oo) for i in io
        )
        return NodeProblem(
            self.demand[io],
            self.split[io][:, oo],
            self.supply[oo],
            self.priority[io],
            eta,
            None if self.capacity is None else self.capacity[io],
            tuple(self.input_ids[k] for k in io),
            tuple(self.output_ids[k] for k in oo),
        )


def build_restriction(M: int, N: int, entries=None) -> Restriction:
    """Expands a nested or sparse restriction description into a full table."""
    if entries is None:
        return tuple(tuple(tuple(FULL for _ in range(N)) for _ in range(N)) for _ in range(M))
    if isinstance(entries, Mapping):
        table = [[[FULL] * N for _ in range(N)] for _ in range(M)]
        for (i, a, b), value in entries.items():
            table[i][a][b] = _as_interval(value)
        return tuple(tuple(tuple(row) for row in block) for block in table)
    return tuple(
        tuple(tuple(_as_interval(x) for x in row) for row in block) for block in entries
    )


def _as_interval(value) -> IntervalSet:
    if isinstance(value, IntervalSet):
        return value
    return IntervalSet.from_json(value)


@dataclass(frozen=True, eq=False)
class OrientedDemand:
    """Per-movement demand; ``s[i, j, c] = split[i, j, c] * demand[i, c]``."""

    s: np.ndarray
    s_total: np.ndarray


@dataclass(frozen=True, eq=False)
class FlowMatrix:
    """Solved flows ``f[i, j, c]`` with convenience aggregates."""

    f: np.ndarray
    input_ids: tuple[str, ...] = field(default=())
    output_ids: tuple[str, ...] = field(default=())

    @property
    def movement(self) -> np.ndarray:
        """Totals over commodities, shape (M, N)."""
        return self.f.sum(axis=2)

    @property
    def inflow(self) -> np.ndarray:
        """Total flow leaving each input link, shape (M,)."""
        return self.f.sum(axis=(1, 2))

    @property
    def outflow(self) -> np.ndarray:
        """Total flow entering each output link, shape (N,)."""
        return self.f.sum(axis=(0, 2))

    def leftover_supply(self, problem: NodeProblem) -> np.ndarray:
        return problem.supply - self.outflow


def validate(p: NodeProblem) -> list[Violation]:
    """Returns every invariant violation; an empty list means the problem is valid."""
    out: list[Violation] = []
    if p.demand.ndim != 2:
        return [Violation("shape", f"demand must be 2-D (M, C), got shape {p.demand.shape}")]
    M, C = p.demand.shape
    N = p.supply.shape[0]
    if M < 1 or N < 1 or C < 1:
        out.append(Violation("shape", f"need M, N, C >= 1, got M={M}, N={N}, C={C}"))
        return out
    if p.split.shape != (M, N, C):
        out.append(Violation("shape", f"split must have shape {(M, N, C)}, got {p.split.shape}"))
        return out
    if p.priority.shape != (M,):
        out.append(Violation("shape", f"priority must have shape {(M,)}, got {p.priority.shape}"))
        return out
    if p.capacity is not None and p.capacity.shape != (M,):
        out.append(Violation("shape", f"capacity must have shape {(M,)}, got {p.capacity.shape}"))
        return out
    if len(p.restriction) != M or any(
        len(block) != N or any(len(row) != N for row in block) for block in p.restriction
    ):
        out.append(Violation("shape", f"restriction table must be {M} x {N} x {N}"))
        return out
    if len(p.input_ids) != M or len(p.output_ids) != N:
        out.append(Violation("shape", "link label count does not match dimensions"))

    arrays = (("demand", p.demand), ("split", p.split), ("supply", p.supply),
              ("priority", p.priority))
    for name, arr in arrays:
        if np.isfinite(arr).all():
            continue
        for idx in np.argwhere(~np.isfinite(arr)):
            out.append(Violation("finite", f"{name}{idx.tolist()} is not finite",
                                 tuple(int(x) for x in idx)))
    for name, arr in arrays:
        if not (arr < 0).any():
            continue
        for idx in np.argwhere(arr < 0):
            out.append(Violation("negative", f"{name}{idx.tolist()} = {float(arr[tuple(idx)])} "
                                 "is negative", tuple(int(x) for x in idx)))
    if p.capacity is not None and not (p.capacity >= 0).all():
        for idx in np.argwhere(~(p.capacity >= 0)):
            out.append(Violation("negative", f"capacity[{idx[0]}] must be non-negative",
                                 (int(idx[0]),)))
    sums = p.split.sum(axis=1)
    off = (p.demand > 0) & ~(np.abs(sums - 1.0) <= SPLIT_TOL)
    for i, c in np.argwhere(off).tolist():
        out.append(Violation(
            "split_sum",
            f"split ratios of input {p.input_ids[i] if i < len(p.input_ids) else i} "
            f"commodity {c} sum to {float(sums[i, c])!r}, expected 1",
            (i, c),
        ))
    for i in range(M):
        for j in range(N):
            if not p.restriction[i][j][j].is_full():
                out.append(Violation(
                    "diagonal",
                    f"restriction[{i}][{j}][{j}] must be the full interval [0, 1] "
                    f"(diagonal must be full), got {p.restriction[i][j][j]!r}",
                    (i, j, j),
                ))
    return out


def ensure_valid(p: NodeProblem) -> None:
    violations = validate(p)
    if violations:
        raise ValidationError(violations)


def oriented_demands(p: NodeProblem) -> OrientedDemand:
    s = p.split * p.demand[:, None, :]
    return OrientedDemand(s, s.sum(axis=2))


def oriented_priorities(p: NodeProblem, s: OrientedDemand | None = None) -> np.ndarray:
    """Splits each input's priority across its movements by demand share.

    Inputs with zero total demand get zero oriented priority everywhere.
    """
    if s is None:
        s = oriented_demands(p)
    total = p.demand.sum(axis=1)
    out = np.zeros_like(s.s_total)
    for i in range(p.M):
        if total[i] > 0:
            out[i] = p.priority[i] * s.s_total[i] / total[i]
    return out


# Priority presets


def capacity_priorities(p: NodeProblem) -> NodeProblem:
    """Priorities equal to input capacities."""
    if p.capacity is None:
        raise ValueError("capacity-proportional priorities need input capacities")
    return p.with_priority(p.capacity.copy())


def constant_priorities(p: NodeProblem, value: float = 1.0) -> NodeProblem:
    return p.with_priority(np.full(p.M, float(value)))


def onramp_preference(p: NodeProblem, preferred: Sequence[int], value: float = 1.0) -> NodeProblem:
    """Zero priority everywhere except the preferred inputs."""
    pri = np.zeros(p.M)
    for i in preferred:
        pri[i] = value
    return p.with_priority(pri)


def demand_priorities(p: NodeProblem) -> NodeProblem:
    """Priorities equal to total demand. Emits :class:`DemandPriorityWarning`."""
    warnings.warn(
        "priorities proportional to demand make flows depend on demand of "
        "supply-constrained links; use for comparison only",
        DemandPriorityWarning,
        stacklevel=2,
    )
    return p.with_priority(p.demand.sum(axis=1))


def is_demand_proportional(p: NodeProblem, rel: float = 1e-9) -> bool:
    """True when priorities are a positive multiple of total demand."""
    total = p.demand.sum(axis=1)
    if not np.any(total > 0) or not np.any(p.priority > 0):
        return False
    k = p.priority.sum() / total.sum()
    return bool(np.all(np.abs(p.priority - k * total) <= rel * max(1.0, float(p.priority.max()))))

