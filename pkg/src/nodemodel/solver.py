"""Constructive node-model algorithms: merge, diverge and general junctions.

All three solvers share one reading of the allocation process. Each input
link claims downstream supply at a rate given by its (effective) priority,
split over its movements in proportion to their demand. ``a_j`` is the time
at which output ``j`` would run out of supply if every movement still
competing for it kept claiming at its rate. An iteration either lets every
movement that finishes before the earliest such time go through in full, or
fills the most restrictive output and propagates the resulting queue to the
claimants' other movements through their restriction intervals.

The general solver (:func:`solve_mimo`) reduces exactly to the merge solver
for one output and to the diverge solver for one input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .intervals import EMPTY, IntervalSet
from .problem import FlowMatrix, NodeProblem, ensure_valid

FREE_FLOW_TOL = 1e-9
"""Absolute slack (vehicles) when testing whether a movement can finish."""


@dataclass(frozen=True)
class Rescale:
    """A running-demand change for movement ``(i, j)``."""

    i: int
    j: int
    before: float
    after: float
    reason: str  # "claim" or "restriction"


@dataclass(frozen=True)
class Assignment:
    i: int
    j: int
    flow: tuple[float, ...]

    @property
    def total(self) -> float:
        return sum(self.flow)


@dataclass
class IterationRecord:
    """Everything decided in one iteration of a solver."""

    k: int
    unprocessed: tuple[int, ...]
    active: tuple[int, ...]
    effective_priority: dict[int, float]
    oriented_priority: dict[tuple[int, int], float]
    factors: dict[int, float]
    most_restrictive: int | None
    factor: float
    branch: str  # "free" or "congested"
    completed: tuple[tuple[int, int], ...] = ()
    claimants: tuple[int, ...] = ()
    filled: tuple[int, ...] = ()
    rescaled: list[Rescale] = field(default_factory=list)
    assigned: list[Assignment] = field(default_factory=list)
    remaining_supply: tuple[float, ...] = ()


@dataclass
class SolverState:
    """Mutable working state of the general solver.

    Attributes:
        k: Iteration counter.
        remaining_supply: Supply not yet claimed by assigned movements.
        running_demand: ``[i][j][c]`` demand still allowed to flow.
        running_union: ``[i][j]`` union of restriction intervals activated so far.
        unassigned: ``[j]`` inputs still competing for output ``j``.
        unprocessed: Outputs with at least one competing input.
        effective_priority: Priorities after the zero-priority reset.
    """

    k: int
    remaining_supply: list[float]
    running_demand: list[list[list[float]]]
    running_union: list[list[IntervalSet]]
    unassigned: list[set[int]]
    unprocessed: list[int]
    effective_priority: list[float]


@dataclass
class SolverTrace:
    """Per-iteration record of a solve; empty when the solve ran quietly."""

    method: str
    shape: tuple[int, int, int]
    recorded: bool = True
    iterations: list[IterationRecord] = field(default_factory=list)
    iteration_count: int = 0

    def replay(self) -> np.ndarray:
        """Rebuilds the flow array from recorded assignments."""
        if not self.recorded:
            raise ValueError("trace was not recorded (quiet mode)")
        M, N, C = self.shape
        f = np.zeros((M, N, C))
        for it in self.iterations:
            for a in it.assigned:
                f[a.i, a.j] = a.flow
        return f

    def to_json(self) -> dict:
        def conv(it: IterationRecord) -> dict:
            return {
                "k": it.k,
                "unprocessed": list(it.unprocessed),
                "active": list(it.active),
                "effective_priority": {str(i): v for i, v in it.effective_priority.items()},
                "oriented_priority": [[i, j, v] for (i, j), v in it.oriented_priority.items()],
                "factors": {str(j): _json_float(v) for j, v in it.factors.items()},
                "most_restrictive": it.most_restrictive,
                "factor": _json_float(it.factor),
                "branch": it.branch,
                "completed": [list(x) for x in it.completed],
                "claimants": list(it.claimants),
                "filled": list(it.filled),
                "rescaled": [
                    {"i": r.i, "j": r.j, "before": r.before, "after": r.after, "reason": r.reason}
                    for r in it.rescaled
                ],
                "assigned": [{"i": a.i, "j": a.j, "flow": list(a.flow)} for a in it.assigned],
                "remaining_supply": list(it.remaining_supply),
            }

        return {
            "method": self.method,
            "iteration_count": self.iteration_count,
            "iterations": [conv(it) for it in self.iterations],
        }


def _json_float(x: float) -> float | None:
    return x if math.isfinite(x) else None


def reassign_zero_priorities(priority, active) -> dict[int, float]:
    """Effective priorities of the active inputs.

    If any active input has a positive priority the priorities are used as
    they are; otherwise every active input gets ``1 / len(active)``.

    >>> reassign_zero_priorities([0.0, 0.0, 5.0], [0, 1, 2])
    {0: 0.0, 1: 0.0, 2: 5.0}
    >>> reassign_zero_priorities([0.0, 0.0, 0.0], [0, 1, 2])
    {0: 0.3333333333333333, 1: 0.3333333333333333, 2: 0.3333333333333333}
    """
    active = list(active)
    if any(priority[i] > 0 for i in active):
        return {i: float(priority[i]) for i in active}
    if not active:
        return {}
    share = 1.0 / len(active)
    return {i: share for i in active}


def restriction_update(
    running: float,
    running_union: IntervalSet,
    eta: IntervalSet,
    claimed: float,
    demand_restricting: float,
    demand_restricted: float,
) -> float:
    """Running demand of a movement after another output of its input fills.

    Args:
        running: Current running demand of the restricted movement.
        running_union: Restriction already active on the restricted movement.
        eta: Restriction interval from the filled output onto this movement.
        claimed: Flow granted to the input toward the filled output.
        demand_restricting: Original demand toward the filled output.
        demand_restricted: Original demand of the restricted movement.

    Returns:
        The reduced running demand, clamped at zero. The subtracted amount is
        the area of the newly blocked rectangle: the part of ``eta`` not yet
        covered, times the unserved share toward the filled output, times the
        original demand of the restricted movement.
    """
    height = eta.measure() - running_union.intersect_measure(eta)
    if height <= 0.0:
        return running
    width = 1.0 - claimed / demand_restricting
    new = running - demand_restricted * height * width
    return new if new > 0.0 else 0.0


def _scaled(vec: list[float], old: float, new: float) -> list[float]:
    if new <= 0.0 or old <= 0.0:
        return [0.0] * len(vec)
    r = new / old
    return [x * r if x > 0.0 else 0.0 for x in vec]


def _flow_matrix(f, problem: NodeProblem) -> FlowMatrix:
    return FlowMatrix(np.array(f, dtype=float).reshape(problem.M, problem.N, problem.C),
                      problem.input_ids, problem.output_ids)


def solve_mimo(
    problem: NodeProblem,
    *,
    quiet: bool = False,
    check: bool = True,
    tol: float = FREE_FLOW_TOL,
) -> tuple[FlowMatrix, SolverTrace]:
    """Solves a general junction with relaxed FIFO.

    Args:
        problem: The junction instance.
        quiet: Skip trace recording (the returned trace is empty).
        check: Validate the problem first; raises ``ValidationError``.
        tol: Absolute slack for the "movement finishes in time" test.

    Returns:
        The flow matrix and the solver trace.
    """
    if check:
        ensure_valid(problem)
    M, N, C = problem.M, problem.N, problem.C
    dem = problem.demand.tolist()
    spl = problem.split.tolist()
    pri = problem.priority.tolist()
    eta = problem.restriction

    s0c = [[[spl[i][j][c] * dem[i][c] for c in range(C)] for j in range(N)] for i in range(M)]
    s0 = [[sum(s0c[i][j]) for j in range(N)] for i in range(M)]
    si = [sum(dem[i]) for i in range(M)]
    ratio = [[s0[i][j] / si[i] if si[i] > 0 else 0.0 for j in range(N)] for i in range(M)]

    sr = [[list(s0c[i][j]) for j in range(N)] for i in range(M)]
    st = [list(row) for row in s0]
    rt = problem.supply.tolist()
    union = [[EMPTY] * N for _ in range(M)]
    U = [{i for i in range(M) if s0[i][j] > 0.0} for j in range(N)]
    V = [j for j in range(N) if U[j]]
    f = [[[0.0] * C for _ in range(N)] for _ in range(M)]

    trace = SolverTrace("mimo", (M, N, C), recorded=not quiet)
    k = 0
    while V:
        active = sorted(set().union(*(U[j] for j in V)))
        pt = reassign_zero_priorities(pri, active)
        po: dict[tuple[int, int], float] = {}
        a: dict[int, float] = {}
        for j in V:
            den = 0.0
            for i in sorted(U[j]):
                v = pt[i] * ratio[i][j]
                po[(i, j)] = v
                den += v
            a[j] = rt[j] / den if den > 0.0 else math.inf
        js = min(V, key=lambda j: (a[j], j))
        A = a[js]

        rec = None
        if not quiet:
            rec = IterationRecord(k, tuple(V), tuple(active), dict(pt), dict(po), dict(a), js, A, "free")

        done = [(i, j) for j in V for i in sorted(U[j]) if st[i][j] <= po[(i, j)] * A + tol]
        if done:
            for i, j in done:
                flow = [x if x > 0.0 else 0.0 for x in sr[i][j]]
                f[i][j] = flow
                rt[j] -= sum(flow)
                if rt[j] < 0.0:
                    rt[j] = 0.0
                U[j].discard(i)
                if rec is not None:
                    rec.assigned.append(Assignment(i, j, tuple(flow)))
            if rec is not None:
                rec.completed = tuple(done)
        else:
            # outputs tied at the earliest fill time fill together
            filled = [j for j in V if a[j] == A]
            granted: dict[tuple[int, int], float] = {}
            for jf in filled:
                for i in sorted(U[jf]):
                    new = po[(i, jf)] * A
                    old = st[i][jf]
                    sr[i][jf] = _scaled(sr[i][jf], old, new)
                    st[i][jf] = new
                    granted[(i, jf)] = new
                    if rec is not None:
                        rec.rescaled.append(Rescale(i, jf, old, new, "claim"))
            claim = sorted({i for jf in filled for i in U[jf]})
            for i in claim:
                mine = [jf for jf in filled if i in U[jf]]
                for jf in mine:
                    for j in V:
                        if j in filled or i not in U[j]:
                            continue
                        e = eta[i][jf][j]
                        if e.is_empty():
                            continue
                        old = st[i][j]
                        new = restriction_update(old, union[i][j], e, granted[(i, jf)],
                                                 s0[i][jf], s0[i][j])
                        if new != old:
                            sr[i][j] = _scaled(sr[i][j], old, new)
                            st[i][j] = new
                            if rec is not None:
                                rec.rescaled.append(Rescale(i, j, old, new, "restriction"))
                        union[i][j] = union[i][j] | e
                        if union[i][j].is_full():
                            flow = list(sr[i][j])
                            f[i][j] = flow
                            rt[j] -= sum(flow)
                            if rt[j] < 0.0:
                                rt[j] = 0.0
                            U[j].discard(i)
                            if rec is not None:
                                rec.assigned.append(Assignment(i, j, tuple(flow)))
                for jf in mine:
                    flow = list(sr[i][jf])
                    f[i][jf] = flow
                    if rec is not None:
                        rec.assigned.append(Assignment(i, jf, tuple(flow)))
            for jf in filled:
                U[jf] = set()
                rt[jf] = 0.0
            if rec is not None:
                rec.branch = "congested"
                rec.claimants = tuple(claim)
                rec.filled = tuple(filled)
        if rec is not None:
            rec.remaining_supply = tuple(rt)
            trace.iterations.append(rec)
        V = [j for j in V if U[j]]
        k += 1
    trace.iteration_count = k
    return _flow_matrix(f, problem), trace


def solve_miso(
    problem: NodeProblem,
    *,
    quiet: bool = False,
    check: bool = True,
    tol: float = FREE_FLOW_TOL,
) -> tuple[FlowMatrix, SolverTrace]:
    """Solves a merge (many inputs, one output).

    Inputs whose whole demand fits inside their priority share of the
    remaining supply are served in full and the rest is shared again; once no
    input fits, the remaining supply is split in proportion to priority.
    Zero-demand inputs take part in the first round and drop out immediately.
    """
    if check:
        ensure_valid(problem)
    if problem.N != 1:
        raise ValueError(f"merge solver needs exactly one output, got N={problem.N}")
    M, C = problem.M, problem.C
    dem = problem.demand.tolist()
    spl = problem.split.tolist()
    pri = problem.priority.tolist()
    sc = [[spl[i][0][c] * dem[i][c] for c in range(C)] for i in range(M)]
    s = [sum(sc[i]) for i in range(M)]
    remaining = float(problem.supply[0])
    f = [[[0.0] * C] for _ in range(M)]
    left = list(range(M))
    trace = SolverTrace("miso", (M, 1, C), recorded=not quiet)
    k = 0
    while left:
        pt = reassign_zero_priorities(pri, left)
        den = 0.0
        for i in left:
            den += pt[i]
        share = remaining / den
        rec = None
        if not quiet:
            rec = IterationRecord(k, (0,), tuple(left), dict(pt), {(i, 0): pt[i] for i in left},
                                  {0: share}, 0, share, "free")
        fits = [i for i in left if s[i] <= pt[i] * share + tol]
        if fits:
            for i in fits:
                flow = [x if x > 0.0 else 0.0 for x in sc[i]]
                f[i][0] = flow
                remaining -= sum(flow)
                if remaining < 0.0:
                    remaining = 0.0
                if rec is not None:
                    rec.assigned.append(Assignment(i, 0, tuple(flow)))
            left = [i for i in left if i not in fits]
            if rec is not None:
                rec.completed = tuple((i, 0) for i in fits)
        else:
            for i in left:
                new = pt[i] * share
                flow = _scaled(sc[i], s[i], new)
                f[i][0] = flow
                if rec is not None:
                    rec.rescaled.append(Rescale(i, 0, s[i], new, "claim"))
                    rec.assigned.append(Assignment(i, 0, tuple(flow)))
            if rec is not None:
                rec.branch = "congested"
                rec.claimants = tuple(left)
            left = []
            remaining = 0.0
        if rec is not None:
            rec.remaining_supply = (remaining,)
            trace.iterations.append(rec)
        k += 1
    trace.iteration_count = k
    return _flow_matrix(f, problem), trace


def solve_simo(
    problem: NodeProblem,
    *,
    quiet: bool = False,
    check: bool = True,
    tol: float = FREE_FLOW_TOL,
) -> tuple[FlowMatrix, SolverTrace]:
    """Solves a diverge (one input, many outputs) with relaxed FIFO.

    Outputs are ranked by how much of their original movement demand they
    can absorb (``R_j / S_j``). The tightest output fills first; movements
    that finish before it does are served in full, and the others lose the
    share of their demand queued behind the filled output.

    ``factors`` in the trace hold the reduction factors ``R_j / S~_j`` of
    each unprocessed output.
    """
    if check:
        ensure_valid(problem)
    if problem.M != 1:
        raise ValueError(f"diverge solver needs exactly one input, got M={problem.M}")
    N, C = problem.N, problem.C
    dem = problem.demand[0].tolist()
    spl = problem.split[0].tolist()
    eta = problem.restriction[0]
    s0c = [[spl[j][c] * dem[c] for c in range(C)] for j in range(N)]
    s0 = [sum(row) for row in s0c]
    sr = [list(row) for row in s0c]
    st = list(s0)
    R = problem.supply.tolist()
    union = [EMPTY] * N
    V = [j for j in range(N) if s0[j] > 0.0]
    f = [[[0.0] * C for _ in range(N)]]
    trace = SolverTrace("simo", (1, N, C), recorded=not quiet)
    k = 0
    while V:
        level = {j: R[j] / s0[j] for j in V}
        js = min(V, key=lambda j: (level[j], j))
        lev = level[js]
        rec = None
        if not quiet:
            alpha = {j: (R[j] / st[j] if st[j] > 0 else math.inf) for j in V}
            rec = IterationRecord(k, tuple(V), (0,), {0: 1.0}, {}, alpha, js, lev, "free")
        done = [j for j in V if st[j] <= lev * s0[j] + tol]
        if done:
            for j in done:
                flow = [x if x > 0.0 else 0.0 for x in sr[j]]
                f[0][j] = flow
                if rec is not None:
                    rec.assigned.append(Assignment(0, j, tuple(flow)))
            V = [j for j in V if j not in done]
            if rec is not None:
                rec.completed = tuple((0, j) for j in done)
        else:
            filled = [j for j in V if level[j] == lev]
            for jf in filled:
                old = st[jf]
                sr[jf] = _scaled(sr[jf], old, R[jf])
                st[jf] = R[jf]
                if rec is not None:
                    rec.rescaled.append(Rescale(0, jf, old, R[jf], "claim"))
            if rec is not None:
                rec.branch = "congested"
                rec.claimants = (0,)
                rec.filled = tuple(filled)
            for jf in filled:
                for j in V:
                    if j in filled or union[j].is_full():
                        continue
                    e = eta[jf][j]
                    if e.is_empty():
                        continue
                    before = st[j]
                    after = restriction_update(before, union[j], e, R[jf], s0[jf], s0[j])
                    if after != before:
                        sr[j] = _scaled(sr[j], before, after)
                        st[j] = after
                        if rec is not None:
                            rec.rescaled.append(Rescale(0, j, before, after, "restriction"))
                    union[j] = union[j] | e
            for j in V:
                if j in filled or union[j].is_full():
                    f[0][j] = list(sr[j])
                    if rec is not None:
                        rec.assigned.append(Assignment(0, j, tuple(f[0][j])))
            V = [j for j in V if j not in filled and not union[j].is_full()]
        if rec is not None:
            rec.remaining_supply = tuple(
                R[j] - sum(f[0][j]) for j in range(N)
            )
            trace.iterations.append(rec)
        k += 1
    trace.iteration_count = k
    return _flow_matrix(f, problem), trace


def solve(problem: NodeProblem, **kw) -> tuple[FlowMatrix, SolverTrace]:
    """Dispatches to the general solver (valid for every shape)."""
    return solve_mimo(problem, **kw)
