"""Independent checks for solved junction flows.

Nothing here calls into the solver's internals: the audit rebuilds restricting
sets, rectangle areas and FIFO bounds from the problem data and the flows
alone. The only solver entry point used is the public ``solve_mimo`` inside
:func:`check_invariance`, which re-solves modified problems.

Notation used in comments: for input ``i`` the progress of movement
``(i, j)`` is ``f[i, j] / S[i, j]``. When output ``j'`` runs out of supply
while input ``i`` is still claiming it, every other movement ``(i, j)`` loses
a rectangle of demand: height ``|eta[i][j'][j]|`` (share of lanes blocked),
width ``1 - progress(i, j')`` (share of demand still queued), scaled by
``S[i, j]``.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .intervals import EMPTY, IntervalSet
from .problem import (
    FlowMatrix,
    NodeProblem,
    ValidationError,
    Violation,
    oriented_demands,
)
from .solver import solve_mimo

AUDIT_TOL = 1e-9
CLAIM_REL_TOL = 1e-10

Rect = tuple[IntervalSet, float]


# Rectangle areas


def rectangle_area(
    flow_from: float, demand_from: float, demand_to: float, eta: IntervalSet
) -> float:
    """Area of the blocked rectangle on movement ``(i, j)`` caused by ``j'``.

    Args:
        flow_from: ``f[i, j']``.
        demand_from: ``S[i, j']``; zero means nothing queues, so no area.
        demand_to: ``S[i, j]``, the base of the restricted movement.
        eta: Restriction interval ``eta[i][j'][j]``.

    >>> round(rectangle_area(205.5, 300.0, 1600.0, IntervalSet([(0.0, 0.5)])), 9)
    252.0
    """
    if demand_from <= 0.0:
        return 0.0
    return eta.measure() * (1.0 - flow_from / demand_from) * demand_to


def union_area(rects: Sequence[Rect], base: float = 1.0) -> float:
    """Area of a union of rectangles ``eta x [0, width]``, times ``base``.

    All rectangles share the left edge, so on every elementary band between
    consecutive endpoints the union is as wide as the widest rectangle
    covering that band.
    """
    rects = [(e, w) for e, w in rects if w > 0.0 and not e.is_empty()]
    if not rects:
        return 0.0
    if len(rects) == 1:
        e, w = rects[0]
        return e.measure() * w * base
    points = sorted({x for e, _ in rects for span in e.spans for x in span})
    total = 0.0
    for lo, hi in zip(points, points[1:]):
        mid = 0.5 * (lo + hi)
        best = 0.0
        for e, w in rects:
            if w > best and e.contains(mid):
                best = w
        total += (hi - lo) * best
    return total * base


def union_area_inclusion_exclusion(rects: Sequence[Rect], base: float = 1.0) -> float:
    """Same union area by inclusion–exclusion over all subsets.

    The intersection of rectangles sharing a left edge is the intersection of
    their intervals times the smallest width. Exponential in the number of
    rectangles; meant as a cross-check oracle for small inputs.
    """
    rects = list(rects)
    if len(rects) > 16:
        raise ValueError("inclusion–exclusion oracle limited to 16 rectangles")
    total = 0.0
    for r in range(1, len(rects) + 1):
        sign = 1.0 if r % 2 else -1.0
        for combo in itertools.combinations(rects, r):
            inter = combo[0][0]
            for e, _ in combo[1:]:
                inter = inter & e
                if inter.is_empty():
                    break
            if inter.is_empty():
                continue
            total += sign * inter.measure() * min(w for _, w in combo)
    return total * base


def union_area_monte_carlo(
    rects: Sequence[Rect], base: float = 1.0, samples: int = 200_000, seed: int = 0
) -> float:
    """Monte Carlo estimate of the union area over the unit square."""
    rng = np.random.default_rng(seed)
    x = rng.random(samples)
    y = rng.random(samples)
    hit = np.zeros(samples, dtype=bool)
    for e, w in rects:
        in_x = np.zeros(samples, dtype=bool)
        for lo, hi in e.spans:
            in_x |= (x >= lo) & (x <= hi)
        hit |= in_x & (y < w)
    return float(hit.mean()) * base


# Audit


@dataclass
class ConstraintResult:
    """Outcome of one constraint family.

    ``worst_residual`` is the largest violation amount in vehicles (zero or
    negative when satisfied); ``where`` is the index achieving it.
    """

    name: str
    family: str  # "feasibility", "optimality" or "info"
    passed: bool
    worst_residual: float
    where: tuple[int, ...] = ()
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "family": self.family,
            "passed": self.passed,
            "worst_residual": self.worst_residual,
            "where": list(self.where),
            "detail": self.detail,
        }


@dataclass
class AuditReport:
    """Result of :func:`audit`.

    Attributes:
        checks: Constraint families by name.
        restricting: ``W[i]``, the restricting outputs of each input.
        restricting_as_printed: ``W[i]`` from the literal set-builder
            definition, reported for comparison only.
        active_restriction: ``[i][j]`` union of restriction intervals acting
            on movement ``(i, j)`` at the moment it stopped.
        witnesses: For every movement below its demand, the tight constraint
            that explains it (``None`` when none was found).
        tolerance: Absolute tolerance used, in vehicles.
    """

    checks: dict[str, ConstraintResult]
    restricting: list[list[int]]
    restricting_as_printed: list[list[int]]
    active_restriction: list[list[IntervalSet]]
    witnesses: dict[tuple[int, int], str | None]
    tolerance: float
    input_ids: tuple[str, ...] = ()
    output_ids: tuple[str, ...] = ()

    @property
    def feasible(self) -> bool:
        return all(c.passed for c in self.checks.values() if c.family == "feasibility")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values() if c.family != "info")

    @property
    def failures(self) -> list[ConstraintResult]:
        return [c for c in self.checks.values() if c.family != "info" and not c.passed]

    def to_json(self) -> dict:
        ins = self.input_ids or tuple(str(i) for i in range(len(self.restricting)))
        outs = self.output_ids
        lab = (lambda j: outs[j]) if outs else str
        return {
            "passed": self.passed,
            "feasible": self.feasible,
            "tolerance": self.tolerance,
            "checks": {k: v.to_json() for k, v in self.checks.items()},
            "restricting": {ins[i]: [lab(j) for j in w] for i, w in enumerate(self.restricting)},
            "restricting_as_printed": {
                ins[i]: [lab(j) for j in w] for i, w in enumerate(self.restricting_as_printed)
            },
            "witnesses": [
                {"input": ins[i], "output": lab(j), "witness": w}
                for (i, j), w in sorted(self.witnesses.items())
            ],
        }


class _Tracker:
    def __init__(self, name: str, family: str, tol: float):
        self.name, self.family, self.tol = name, family, tol
        self.worst = -np.inf
        self.where: tuple[int, ...] = ()
        self.detail = ""

    def see(self, residual: float, where: tuple[int, ...], detail: str = "") -> None:
        if residual > self.worst:
            self.worst, self.where, self.detail = float(residual), where, detail

    def result(self) -> ConstraintResult:
        worst = self.worst if np.isfinite(self.worst) else 0.0
        return ConstraintResult(self.name, self.family, worst <= self.tol, worst, self.where,
                                self.detail if worst > self.tol else "")


def _claim_weights(p: NodeProblem, s_total: np.ndarray, si: np.ndarray, a: int, b: int, j: int):
    """Weights used to compare claims of inputs ``a`` and ``b`` at output ``j``.

    Oriented priorities when either input has a positive priority, demand
    shares when both have zero priority (they then share supply equally).
    """
    if p.priority[a] > 0 or p.priority[b] > 0:
        wa = p.priority[a] * s_total[a, j] / si[a] if si[a] > 0 else 0.0
        wb = p.priority[b] * s_total[b, j] / si[b] if si[b] > 0 else 0.0
    else:
        wa = s_total[a, j] / si[a] if si[a] > 0 else 0.0
        wb = s_total[b, j] / si[b] if si[b] > 0 else 0.0
    return wa, wb


def _scale(problem: NodeProblem) -> float:
    return max(1.0, float(problem.demand.sum(axis=1).max(initial=0.0)),
               float(problem.supply.max(initial=0.0)))


def claim_candidates(
    problem: NodeProblem, flows: FlowMatrix, tol: float = AUDIT_TOL
) -> tuple[list[list[int]], list[list[int]]]:
    """Outputs whose claim inequality holds, effective and as literally printed.

    Effective rule: input ``i`` is short of its demand, sends to ``j``, ``j``
    has no supply left, and ``p[i', j] f[i, j] >= p[i, j] f[i', j]`` for every
    other sender ``i'``. Pairs of zero-priority inputs are compared by demand
    share instead.

    Literal rule: ``R[j] > S[i, j] > 0`` and *some* other input satisfies the
    inequality with the raw oriented priorities. Reported for information.
    """
    s = oriented_demands(problem)
    st = s.s_total
    si = problem.demand.sum(axis=1)
    fm = flows.movement
    M, N = problem.M, problem.N
    atol = tol * _scale(problem)
    unsat = si - fm.sum(axis=1) > atol
    exhausted = problem.supply - fm.sum(axis=0) <= atol
    pr = problem.priority

    cand: list[list[int]] = [[] for _ in range(M)]
    printed: list[list[int]] = [[] for _ in range(M)]
    for i in range(M):
        for j in range(N):
            if st[i, j] <= 0:
                continue
            ok_all = True
            ok_any = False
            for k in range(M):
                if k == i:
                    continue
                if st[k, j] > 0 and ok_all:
                    wi, wk = _claim_weights(problem, st, si, i, k, j)
                    lhs = wk * fm[i, j]
                    rhs = wi * fm[k, j]
                    slack = CLAIM_REL_TOL * (lhs + rhs) + max(wi, wk) * atol
                    if lhs < rhs - slack:
                        ok_all = False
                pk = pr[k] * st[k, j] / si[k] if si[k] > 0 else 0.0
                pi = pr[i] * st[i, j] / si[i] if si[i] > 0 else 0.0
                if pk * fm[i, j] >= pi * fm[k, j]:
                    ok_any = True
            if unsat[i] and exhausted[j] and ok_all:
                cand[i].append(j)
            if problem.supply[j] > st[i, j] and ok_any:
                printed[i].append(j)
    return cand, printed


def _fill_clock(problem: NodeProblem, flows: FlowMatrix,
                cand: list[list[int]]) -> dict[int, tuple[int, float]]:
    """Orders the instants at which exhausted outputs filled up.

    Inputs with positive priority claim at rate ``p[i, j]``, so a claimant's
    ``f[i, j] / p[i, j]`` is the fill time. Outputs claimed only by
    zero-priority inputs filled after every positive input was done; among
    those, ``progress * S[i]`` orders them.
    """
    st = oriented_demands(problem).s_total
    si = problem.demand.sum(axis=1)
    fm = flows.movement
    pr = problem.priority
    clock: dict[int, tuple[int, float]] = {}
    for j in range(problem.N):
        members = [i for i in range(problem.M) if j in cand[i]]
        if not members:
            continue
        pos = [i for i in members if pr[i] > 0]
        if pos:
            i = pos[0]
            clock[j] = (0, fm[i, j] / (pr[i] * st[i, j] / si[i]))
        else:
            i = members[0]
            clock[j] = (1, fm[i, j] / st[i, j] * si[i])
    return clock


@dataclass
class _Replay:
    W: list[list[int]]
    rects: list[list[list[Rect]]]
    caps: np.ndarray


def _replay(problem: NodeProblem, flows: FlowMatrix, cand: list[list[int]], atol: float,
            group_rel: float = 1e-12) -> _Replay:
    """Replays, per input, the fills of its candidate outputs in time order.

    A fill restricts input ``i`` only if ``i``'s movement toward that output
    was still running (not finished, not fully blocked). It then blocks every
    other running movement of ``i`` with a rectangle whose width is the share
    of ``i``'s demand still queued. A movement stops when its cap drops to
    what it has already claimed, or when it is a claimant of a fill.
    """
    st = oriented_demands(problem).s_total
    fm = flows.movement
    M, N = problem.M, problem.N
    clock = _fill_clock(problem, flows, cand)
    W: list[list[int]] = [[] for _ in range(M)]
    rects: list[list[list[Rect]]] = [[[] for _ in range(N)] for _ in range(M)]
    caps = st.copy()
    for i in range(M):
        order = sorted(cand[i], key=lambda j: (clock[j], j))
        stopped = [False] * N
        k = 0
        while k < len(order):
            key = clock[order[k]]
            end = k
            while end < len(order):
                other = clock[order[end]]
                if other[0] != key[0] or other[1] > key[1] * (1.0 + group_rel) + 1e-300:
                    break
                end += 1
            group = order[k:end]
            k = end
            live = [jf for jf in group if not stopped[jf] and caps[i, jf] > fm[i, jf] + atol]
            if not live:
                for jf in group:
                    stopped[jf] = True
                continue
            phi = fm[i, live[0]] / st[i, live[0]]
            for j in range(N):
                if st[i, j] <= 0 or stopped[j] or j in group:
                    continue
                if caps[i, j] <= phi * st[i, j] + atol:
                    stopped[j] = True
                    continue
                for jf in live:
                    rects[i][j].append((problem.restriction[i][jf][j], max(0.0, 1.0 - phi)))
                caps[i, j] = st[i, j] - union_area(rects[i][j], st[i, j])
            for jf in group:
                stopped[jf] = True
            W[i].extend(live)
        W[i].sort()
    return _Replay(W, rects, caps)


def restricting_sets(
    problem: NodeProblem, flows: FlowMatrix, tol: float = AUDIT_TOL
) -> tuple[list[list[int]], list[list[int]]]:
    """Restricting outputs per input, effective and as literally printed.

    The effective set keeps the candidates (see :func:`claim_candidates`)
    whose movement was still running when the output filled; a movement
    already blocked by another queue does not claim anything.
    """
    cand, printed = claim_candidates(problem, flows, tol)
    rep = _replay(problem, flows, cand, tol * _scale(problem))
    return rep.W, printed


def fifo_rects(
    problem: NodeProblem,
    flows: FlowMatrix,
    W: list[list[int]],
    i: int,
    j: int,
    *,
    time_consistent: bool = True,
    atol: float | None = None,
) -> list[Rect]:
    """Rectangles bounding movement ``(i, j)``, as ``(eta, width)`` pairs.

    With ``time_consistent`` (default), ``W`` is treated as the candidate set
    and replayed in fill order so that only queues formed while ``(i, j)``
    was running count. Otherwise every output in ``W[i]`` other than ``j``
    contributes, as in the static form of the constraint.
    """
    st = oriented_demands(problem).s_total
    if st[i, j] <= 0:
        return []
    if not time_consistent:
        fm = flows.movement
        return [
            (problem.restriction[i][jp][j], max(0.0, 1.0 - fm[i, jp] / st[i, jp]))
            for jp in W[i] if jp != j and st[i, jp] > 0
        ]
    if atol is None:
        atol = AUDIT_TOL * _scale(problem)
    return _replay(problem, flows, W, atol).rects[i][j]


def full_fifo_bound(problem: NodeProblem, flows: FlowMatrix, W: list[list[int]], i: int, j: int) -> float:
    """``min over W[i]`` of progress times ``S[i, j]``; ``S[i, j]`` if ``W[i]`` is empty."""
    s = oriented_demands(problem).s_total
    fm = flows.movement
    best = 1.0
    for jp in W[i]:
        if s[i, jp] > 0:
            best = min(best, fm[i, jp] / s[i, jp])
    return best * s[i, j]


def audit(problem: NodeProblem, flows: FlowMatrix, tol: float = AUDIT_TOL) -> AuditReport:
    """Checks flows against every constraint of the node model.

    Feasibility families: non-negativity, demand, supply, proportionality,
    priority allocation among claimants of each output, priority lower bound
    and the relaxed FIFO bound. Optimality families: every short input has a
    restricting output, and every movement below its demand has a tight
    constraint. Residuals are in vehicles; the tolerance is ``tol`` times the
    largest link demand or supply (at least one vehicle).

    Raises:
        ValidationError: if the flow array does not match the problem shape.
    """
    M, N, C = problem.M, problem.N, problem.C
    if flows.f.shape != (M, N, C):
        raise ValidationError([Violation(
            "shape", f"flows have shape {flows.f.shape}, problem expects {(M, N, C)}")])
    scale = _scale(problem)
    atol = tol * scale
    s = oriented_demands(problem)
    sc, st = s.s, s.s_total
    si = problem.demand.sum(axis=1)
    f = flows.f
    fm = flows.movement
    pr = problem.priority

    nonneg = _Tracker("non_negativity", "feasibility", atol)
    demand = _Tracker("demand", "feasibility", atol)
    supply = _Tracker("supply", "feasibility", atol)
    prop = _Tracker("proportionality", "feasibility", atol)
    claim = _Tracker("priority_allocation", "feasibility", atol)
    lower = _Tracker("priority_lower_bound", "feasibility", atol)
    fifo = _Tracker("relaxed_fifo", "feasibility", atol)
    fifo_lit = _Tracker("relaxed_fifo_static", "info", atol)
    has_w = _Tracker("restricting_output_exists", "optimality", 0.0)
    maximal = _Tracker("maximality_witness", "optimality", 0.0)

    nonneg.see(float(-f.min(initial=0.0)), tuple(int(x) for x in np.unravel_index(np.argmin(f), f.shape)))
    excess = f - sc
    demand.see(float(excess.max()), tuple(int(x) for x in np.unravel_index(np.argmax(excess), f.shape)))
    out_tot = fm.sum(axis=0)
    for j in range(N):
        supply.see(out_tot[j] - problem.supply[j], (j,))
    for i in range(M):
        for j in range(N):
            if st[i, j] > 0 and fm[i, j] > 0:
                for c in range(C):
                    prop.see(abs(f[i, j, c] - fm[i, j] * sc[i, j, c] / st[i, j]), (i, j, c))
            elif st[i, j] <= 0:
                prop.see(abs(fm[i, j]), (i, j))

    cand, printed = claim_candidates(problem, flows, tol)
    rep = _replay(problem, flows, cand, atol)
    W = rep.W
    unsat = si - fm.sum(axis=1) > atol

    # claimants of one output share it in proportion to their weights
    for j in range(N):
        members = [i for i in range(M) if j in W[i]]
        for a_, b_ in zip(members, members[1:]):
            wa, wb = _claim_weights(problem, st, si, a_, b_, j)
            denom = wa + wb
            if denom <= 0:
                continue
            r = abs(wa * fm[b_, j] - wb * fm[a_, j]) / denom
            claim.see(r, (b_, j), f"inputs {a_} and {b_} claim output {j} out of proportion")

    # lower bound at restricting outputs
    for i in range(M):
        for j in W[i]:
            tot = sum(pr[k] * st[k, j] / si[k] for k in range(M) if si[k] > 0)
            if tot > 0:
                share = (pr[i] * st[i, j] / si[i]) / tot
            else:
                wsum = sum(st[k, j] / si[k] for k in range(M) if si[k] > 0)
                share = (st[i, j] / si[i]) / wsum if wsum > 0 else 0.0
            lower.see(share * problem.supply[j] - fm[i, j], (i, j))

    active: list[list[IntervalSet]] = [[EMPTY] * N for _ in range(M)]
    witnesses: dict[tuple[int, int], str | None] = {}
    for i in range(M):
        if unsat[i]:
            has_w.see(0.0 if W[i] else 1.0, (i,),
                      "" if W[i] else f"input {i} is short but has no restricting output")
        for j in range(N):
            if st[i, j] <= 0:
                continue
            rects = rep.rects[i][j]
            bound = rep.caps[i, j]
            fifo.see(fm[i, j] - bound, (i, j))
            rects_all = [
                (problem.restriction[i][jp][j], max(0.0, 1.0 - fm[i, jp] / st[i, jp]))
                for jp in W[i] if jp != j
            ]
            fifo_lit.see(fm[i, j] - (st[i, j] - union_area(rects_all, st[i, j])), (i, j))
            u = EMPTY
            for e, _ in rects:
                u = u | e
            active[i][j] = u
            if fm[i, j] < st[i, j] - atol:
                w = None
                if j in W[i]:
                    w = "supply"
                elif rects and abs(fm[i, j] - bound) <= atol:
                    w = "relaxed_fifo_frozen" if u.is_full() else "relaxed_fifo"
                witnesses[(i, j)] = w
                maximal.see(0.0 if w else 1.0, (i, j),
                            "" if w else f"movement ({i}, {j}) is below demand with no tight constraint")

    checks = {t.name: t.result() for t in
              (nonneg, demand, supply, prop, claim, lower, fifo, fifo_lit, has_w, maximal)}
    return AuditReport(checks, W, printed, active, witnesses, atol,
                       problem.input_ids, problem.output_ids)


# Closed-form oracles


def _share(p: Sequence[float], i: int, group: Sequence[int]) -> float:
    tot = sum(p[k] for k in group)
    if tot > 0:
        return p[i] / tot
    return 1.0 / len(group)


def closed_form_miso(problem: NodeProblem) -> np.ndarray:
    """Upper bounds on each input's flow in a merge with two or three inputs.

    For each input the bound is the largest of its priority share of the
    supply left over after any subset of the other inputs has been served in
    full. Shares among inputs whose priorities are all zero are equal. The
    merge solution is ``min(S_i, bound_i)``.

    >>> p = NodeProblem.create([900.0, 900.0], [[1.0], [1.0]], [900.0], [2.0, 1.0])
    >>> closed_form_miso(p).tolist()
    [600.0, 300.0]
    """
    if problem.N != 1:
        raise ValueError("closed form needs exactly one output")
    M = problem.M
    if M not in (2, 3):
        raise ValueError(f"closed form implemented for M in (2, 3), got M={M}")
    S = (problem.split[:, 0, :] * problem.demand).sum(axis=1).tolist()
    R = float(problem.supply[0])
    p = problem.priority.tolist()
    out = []
    for i in range(M):
        others = [k for k in range(M) if k != i]
        best = -np.inf
        for r in range(len(others) + 1):
            for served in itertools.combinations(others, r):
                group = [i] + [k for k in others if k not in served]
                left = R - sum(S[k] for k in served)
                best = max(best, _share(p, i, group) * left)
        out.append(best)
    return np.array(out)


def closed_form_simo_full_fifo(problem: NodeProblem) -> np.ndarray:
    """Diverge flows under full FIFO: every movement served at the tightest ratio."""
    if problem.M != 1:
        raise ValueError("closed form needs exactly one input")
    sc = problem.split[0] * problem.demand[0][None, :]
    st = sc.sum(axis=1)
    ratio = 1.0
    for j in range(problem.N):
        if st[j] > 0:
            ratio = min(ratio, problem.supply[j] / st[j])
    return (ratio * sc)[None, :, :]


def reference_full_fifo(problem: NodeProblem) -> np.ndarray:
    """Full-FIFO junction flows from a direct link-level computation.

    Every input link moves as one unit: it either sends its whole demand or
    is held at ``p_i a`` by the tightest output it uses, where ``a`` is that
    output's remaining supply per unit of competing priority. Restriction
    intervals are ignored, so this is the reference only for problems whose
    intervals are all full.
    """
    M, N = problem.M, problem.N
    sc = problem.split * problem.demand[:, None, :]
    S = sc.sum(axis=2)
    total = S.sum(axis=1)
    share = np.divide(S, total[:, None], out=np.zeros_like(S), where=total[:, None] > 0)
    R = problem.supply.astype(float).copy()
    sent = np.zeros(M)
    active = [i for i in range(M) if total[i] > 0]
    while active:
        p = problem.priority[active].astype(float)
        if not np.any(p > 0):
            p = np.full(len(active), 1.0 / len(active))
        weight = p @ share[active]
        used = weight > 0
        a = np.full(N, np.inf)
        a[used] = np.maximum(R[used], 0.0) / weight[used]
        jstar = int(np.argmin(a))
        astar = a[jstar]
        done = [i for i, pi in zip(active, p) if total[i] <= pi * astar]
        if not done:
            done = [i for i in active if share[i, jstar] > 0]
            for i, pi in zip(active, p):
                if i in done:
                    sent[i] = pi * astar
        else:
            for i in done:
                sent[i] = total[i]
        for i in done:
            R -= sent[i] * share[i]
        active = [i for i in active if i not in done]
    scale = np.divide(sent, total, out=np.zeros(M), where=total > 0)
    return sc * scale[:, None, None]


# Invariance harness


@dataclass
class InvarianceReport:
    """Per-input outcome of the demand-to-capacity replacement test."""

    status: dict[int, str] = field(default_factory=dict)
    deviation: dict[int, float] = field(default_factory=dict)

    @property
    def tested(self) -> list[int]:
        return [i for i, s in self.status.items() if s in ("pass", "fail")]

    @property
    def passed(self) -> bool:
        return all(s != "fail" for s in self.status.values())


def supply_constrained_inputs(problem: NodeProblem, flows: FlowMatrix, report: AuditReport) -> list[int]:
    """Inputs whose every movement is claimed at a full output or fully blocked.

    These are the inputs whose flows cannot depend on how much demand they
    have. An input with a movement that finished after being partly blocked
    is excluded: that movement's flow depends on its demand.
    """
    s = oriented_demands(problem).s_total
    fm = flows.movement
    si = problem.demand.sum(axis=1)
    out = []
    for i in range(problem.M):
        if si[i] - fm[i].sum() <= report.tolerance:
            continue
        if all(
            s[i, j] <= 0 or j in report.restricting[i]
            or report.witnesses.get((i, j)) == "relaxed_fifo_frozen"
            for j in range(problem.N)
        ):
            out.append(i)
    return out


def check_invariance(
    problem: NodeProblem,
    flows: FlowMatrix | None = None,
    *,
    priority_fn: Callable[[NodeProblem], NodeProblem] | None = None,
    tol: float = AUDIT_TOL,
) -> InvarianceReport:
    """Replaces each supply-constrained input's demand by its capacity and re-solves.

    Args:
        problem: A solved or unsolved instance with capacities.
        flows: Flows of ``problem``; solved here when omitted.
        priority_fn: Optional hook applied to the modified problem, e.g. to
            recompute priorities from the new demands.
        tol: Relative tolerance for flow equality.

    Returns:
        Status per input: ``pass``, ``fail`` or ``skip: <reason>``.
    """
    rep = InvarianceReport()
    if problem.capacity is None:
        for i in range(problem.M):
            rep.status[i] = "skip: no capacities"
        return rep
    if flows is None:
        flows, _ = solve_mimo(problem, quiet=True)
    report = audit(problem, flows, tol)
    constrained = set(supply_constrained_inputs(problem, flows, report))
    si = problem.demand.sum(axis=1)
    for i in range(problem.M):
        if i not in constrained:
            rep.status[i] = "skip: not supply-constrained"
            continue
        cap = float(problem.capacity[i])
        if not cap > si[i]:
            rep.status[i] = "skip: capacity does not exceed demand"
            continue
        demand = problem.demand.copy()
        demand[i] = demand[i] * (cap / si[i])
        mod = problem.with_demand(demand)
        if priority_fn is not None:
            mod = priority_fn(mod)
        f2, _ = solve_mimo(mod, quiet=True)
        dev = float(np.max(np.abs(f2.f - flows.f), initial=0.0))
        scale = max(1.0, float(np.max(np.abs(flows.f), initial=0.0)))
        rep.deviation[i] = dev
        rep.status[i] = "pass" if dev <= tol * scale else "fail"
    return rep
