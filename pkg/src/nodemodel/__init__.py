"""Multi-commodity junction flows with relaxed FIFO, plus a cell-transmission simulator.

Typical use::

    from nodemodel import load_node, solve_mimo, audit

    scenario = load_node("example_one.json")
    flows, trace = solve_mimo(scenario.problem)
    assert audit(scenario.problem, flows).passed
"""

from __future__ import annotations

from .intervals import EMPTY, FULL, IntervalSet
from .problem import (
    DemandPriorityWarning,
    FlowMatrix,
    NodeProblem,
    ValidationError,
    Violation,
    capacity_priorities,
    constant_priorities,
    demand_priorities,
    onramp_preference,
    oriented_demands,
    oriented_priorities,
    validate,
)
from .scenario import load_flows, load_node
from .solver import SolverTrace, solve, solve_mimo, solve_miso, solve_simo
from .verifier import AuditReport, audit, check_invariance

__version__ = "0.1.0"

__all__ = [
    "EMPTY",
    "FULL",
    "AuditReport",
    "DemandPriorityWarning",
    "FlowMatrix",
    "IntervalSet",
    "NodeProblem",
    "SolverTrace",
    "ValidationError",
    "Violation",
    "audit",
    "capacity_priorities",
    "check_invariance",
    "constant_priorities",
    "demand_priorities",
    "load_flows",
    "load_node",
    "onramp_preference",
    "oriented_demands",
    "oriented_priorities",
    "solve",
    "solve_mimo",
    "solve_miso",
    "solve_simo",
    "validate",
]
