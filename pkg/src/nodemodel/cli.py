"""Command-line front end.

Subcommands:
    solve-node   solve one junction scenario and print its flows
    simulate     run a network scenario and write a CSV time series
    verify       audit a flow file against its junction scenario
    reproduce    compare bundled scenarios against their reference tables

Exit codes: 0 success, 1 validation/audit/configuration failure, 2 IO, parse
or dimension errors. ``NODEMODEL_LOG_LEVEL`` sets the log level (default
WARNING). Scenario paths that do not exist are looked up among the bundled
scenarios, so ``--scenario example_one.json`` works from any directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import __version__
from .network import ConfigError, RunResult, load_network, run
from .problem import FlowMatrix, NodeProblem, ValidationError, validate
from .scenario import (
    NodeScenario,
    ScenarioError,
    ScenarioIOError,
    SchemaError,
    apply_priority_preset,
    bundled,
    bundled_names,
    flows_to_document,
    load_document,
    load_flows,
    node_from_document,
    read_json,
)
from .solver import SolverTrace, solve_mimo
from .verifier import AuditReport, audit

log = logging.getLogger("nodemodel")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
LOG_ENV = "NODEMODEL_LOG_LEVEL"
CSV_COLUMNS = ("time", "link", "cell", "commodity", "density", "flow")


def fmt(x: float) -> str:
    """Six significant digits for human-facing tables."""
    if x is None or (isinstance(x, float) and math.isinf(x)):
        return "inf"
    v = float(x)
    if v == 0.0:
        v = 0.0  # drop negative zero
    return f"{v:.6g}"


def resolve(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    try:
        return bundled(p.name)
    except ScenarioIOError:
        raise ScenarioIOError(f"cannot read {path}: no such file") from None


def _emit_json(doc, out) -> None:
    out.write(json.dumps(doc, indent=2, allow_nan=False) + "\n")


def _violations_doc(exc: ValidationError) -> dict:
    return {"valid": False, "violations": [v.to_json() for v in exc.violations]}


# Rendering


def flow_table(problem: NodeProblem, flows: FlowMatrix, commodities) -> str:
    ins, outs = problem.input_ids, problem.output_ids
    width = max(10, max(len(x) for x in outs) + 2)
    # Round-off residue such as -1e-13 leftover supply is shown as zero.
    noise = 1e-9 * max(1.0, float(problem.supply.max(initial=0.0)))

    def cells(values) -> str:
        return "".join(" " + fmt(0.0 if abs(x) < noise else x).rjust(width - 1) for x in values)

    header = "input".ljust(14) + "".join(f"j={o}".rjust(width) for o in outs)
    lines = [header]
    for i, name in enumerate(ins):
        if problem.C == 1:
            lines.append(f"i={name}".ljust(14) + cells(flows.f[i, :, 0]))
        else:
            for c, cname in enumerate(commodities):
                label = (f"i={name}" if c == 0 else "").ljust(6) + f"c={cname}".ljust(8)
                lines.append(label + cells(flows.f[i, :, c]))
    lines.append("-" * len(header))
    lines.append("leftover".ljust(14) + cells(flows.leftover_supply(problem)))
    return "\n".join(lines)


def trace_text(problem: NodeProblem, trace: SolverTrace) -> str:
    """Iteration-by-iteration walkthrough of a solve."""
    ins, outs = problem.input_ids, problem.output_ids

    def mv(i: int, j: int) -> str:
        return f"({ins[i]},{outs[j]})"

    lines = [f"{trace.method}: {trace.iteration_count} iterations"]
    for it in trace.iterations:
        lines.append(f"k = {it.k}")
        lines.append("  unprocessed outputs: " + ", ".join(outs[j] for j in it.unprocessed))
        lines.append("  active inputs: " + ", ".join(ins[i] for i in it.active))
        lines.append("  priorities: " + ", ".join(
            f"p_{ins[i]}={fmt(v)}" for i, v in sorted(it.effective_priority.items())))
        lines.append("  oriented priorities: " + ", ".join(
            f"p_{mv(i, j)}={fmt(v)}" for (i, j), v in sorted(it.oriented_priority.items())))
        lines.append("  reduction factors: " + ", ".join(
            f"a_{outs[j]}={fmt(v)}" for j, v in sorted(it.factors.items())))
        if it.most_restrictive is not None:
            lines.append(f"  most restrictive: j*={outs[it.most_restrictive]}, "
                         f"a*={fmt(it.factor)}")
        lines.append(f"  branch: {it.branch}")
        if it.completed:
            lines.append("  finished in free flow: "
                         + ", ".join(mv(i, j) for i, j in it.completed))
        if it.filled:
            lines.append("  outputs filled: " + ", ".join(outs[j] for j in it.filled)
                         + "; claimants: " + ", ".join(ins[i] for i in it.claimants))
        for a in it.assigned:
            lines.append(f"  f_{mv(a.i, a.j)} = {fmt(a.total)}")
        for r in it.rescaled:
            lines.append(f"  S~_{mv(r.i, r.j)}: {fmt(r.before)} -> {fmt(r.after)} ({r.reason})")
        lines.append("  remaining supply: " + ", ".join(
            f"R~_{outs[j]}={fmt(v)}" for j, v in enumerate(it.remaining_supply)))
    return "\n".join(lines)


def flows_csv(problem: NodeProblem, flows: FlowMatrix, commodities) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["input", "output", "commodity", "flow"])
    for i, a in enumerate(problem.input_ids):
        for j, b in enumerate(problem.output_ids):
            for c, name in enumerate(commodities):
                w.writerow([a, b, name, repr(float(flows.f[i, j, c]))])
    return buf.getvalue()


def audit_summary(report: AuditReport) -> str:
    lines = []
    for c in report.checks.values():
        mark = "ok" if c.passed else "FAIL"
        where = ""
        if c.where and report.input_ids:
            i = c.where[0]
            where = f" at input {report.input_ids[i]}"
            if len(c.where) > 1 and report.output_ids:
                where += f", output {report.output_ids[c.where[1]]}"
        lines.append(f"{c.name:28s} [{c.family:11s}] {mark:4s} worst residual "
                     f"{fmt(c.worst_residual)}{where if not c.passed else ''}")
    return "\n".join(lines)


# Subcommands


def _load_node(args) -> NodeScenario:
    doc = load_document(resolve(args.scenario), "node")
    scen = node_from_document(doc, args.variant)
    preset = getattr(args, "priority_preset", None)
    if preset:
        problem = apply_priority_preset(scen.problem, preset, tuple(args.onramp or ()))
        scen = NodeScenario(scen.name, problem, scen.commodities, scen.reference, scen.document)
    return scen


def cmd_solve_node(args, out) -> int:
    scen = _load_node(args)
    violations = validate(scen.problem)
    if violations:
        _emit_json({"valid": False, "violations": [v.to_json() for v in violations]}, out)
        return EXIT_FAIL
    flows, trace = solve_mimo(scen.problem, quiet=not args.trace)
    if args.format == "json":
        doc = flows_to_document(flows, scen.problem, scenario=scen.name,
                                commodities=scen.commodities, trace=trace if args.trace else None)
        _emit_json(doc, out)
    elif args.format == "csv":
        if args.trace:
            out.write("# " + trace_text(scen.problem, trace).replace("\n", "\n# ") + "\n")
        out.write(flows_csv(scen.problem, flows, scen.commodities))
    else:
        if args.trace:
            out.write(trace_text(scen.problem, trace) + "\n\n")
        out.write(f"{scen.name}\n{flow_table(scen.problem, flows, scen.commodities)}\n")
    return EXIT_OK


def cmd_verify(args, out) -> int:
    scen = _load_node(args)
    violations = validate(scen.problem)
    if violations:
        _emit_json({"valid": False, "violations": [v.to_json() for v in violations]}, out)
        return EXIT_FAIL
    flows = load_flows(resolve(args.flows), scen.problem)
    report = audit(scen.problem, flows)
    _emit_json(report.to_json(), out)
    if not report.passed:
        sys.stderr.write(audit_summary(report) + "\n")
        return EXIT_FAIL
    return EXIT_OK


def write_timeseries(result: RunResult, path: Path) -> None:
    net = result.network
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for k, t in enumerate(result.times):
            tt = repr(float(t))
            for link in net.links:
                dens = result.density[link.id][k]
                flow = result.flow[link.id][k]
                for cell in range(link.cells):
                    for c, name in enumerate(net.commodities):
                        w.writerow([tt, link.id, cell, name,
                                    repr(float(dens[cell, c])), repr(float(flow[cell, c]))])


def run_summary(result: RunResult, horizon: float) -> dict:
    net = result.network
    dt_h = net.dt_hours
    return {
        "name": net.name,
        "dt": net.dt,
        "horizon": horizon,
        "steps": result.steps,
        "commodities": list(net.commodities),
        "arrived": dict(zip(net.commodities, result.arrived[-1].tolist())),
        "exited": dict(zip(net.commodities, result.exited[-1].tolist())),
        "in_network": dict(zip(net.commodities, result.in_network[-1].tolist())),
        "conservation_error": dict(zip(net.commodities, result.conservation_error().tolist())),
        "links": {
            link.id: {
                "cells": link.cells,
                "cell_length": link.cell_length,
                "entered": (result.inflow[link.id].sum(axis=0) * dt_h).tolist(),
                "left": (result.flow[link.id][:, -1].sum(axis=0) * dt_h).tolist(),
            }
            for link in net.links
        },
        "max_queue": {k: float(q.sum(axis=1).max()) if len(q) else 0.0
                      for k, q in result.queues.items()},
        "junctions": {
            j.id: {
                "inputs": [net.links[n].id for n in j.inputs],
                "outputs": [net.links[n].id for n in j.outputs],
                "cumulative_movement": result.junction_flows[j.id].sum(axis=(0, 3)).tolist(),
            }
            for j in net.junctions
        },
    }


def cmd_simulate(args, out) -> int:
    net = load_network(resolve(args.scenario), args.variant)
    if args.horizon < 0:
        raise ScenarioIOError("--horizon must be non-negative")
    result = run(net, args.horizon)
    outdir = Path(args.out)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        write_timeseries(result, outdir / "timeseries.csv")
        summary = run_summary(result, args.horizon)
        (outdir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n",
                                             encoding="utf-8")
    except OSError as exc:
        raise ScenarioIOError(f"cannot write to {outdir}: {exc}") from exc
    out.write(f"{net.name}: {result.steps} steps written to {outdir}\n")
    return EXIT_OK


def _compare(problem: NodeProblem, flows: FlowMatrix, reference: dict, label: str, out) -> int:
    """Prints one line per reference entry; returns the number of misses."""
    tol = float(reference.get("tolerance", 0.1))
    ref = reference["flows"]
    ins, outs = problem.input_ids, problem.output_ids
    misses = 0
    for i, row in enumerate(ref):
        for j, entry in enumerate(row):
            values = entry if isinstance(entry, list) else [entry]
            got = flows.f[i, j] if isinstance(entry, list) else [flows.f[i, j].sum()]
            for c, (want, have) in enumerate(zip(values, got)):
                if want is None:
                    continue
                ok = abs(have - want) <= tol
                misses += not ok
                tag = f"c{c + 1} " if isinstance(entry, list) else ""
                out.write(f"  {'PASS' if ok else 'FAIL'} {label} f({ins[i]},{outs[j]}) {tag}"
                          f"reference {fmt(want)} computed {fmt(have)} (tol {tol:g})\n")
    for j, want in enumerate(reference.get("leftover", [])):
        if want is None:
            continue
        have = float(flows.leftover_supply(problem)[j])
        ok = abs(have - want) <= tol
        misses += not ok
        out.write(f"  {'PASS' if ok else 'FAIL'} {label} leftover({outs[j]}) "
                  f"reference {fmt(want)} computed {fmt(have)} (tol {tol:g})\n")
    return misses


def cmd_reproduce(args, out) -> int:
    names = args.scenario or [n for n in bundled_names()
                              if read_json(bundled(n)).get("kind") == "node"]
    misses = 0
    for name in names:
        doc = load_document(resolve(name), "node")
        for variant in [None, *sorted(doc.get("variants", {}))]:
            scen = node_from_document(doc, variant)
            if not scen.reference:
                continue
            flows, _ = solve_mimo(scen.problem, quiet=True)
            out.write(f"{scen.name}\n")
            misses += _compare(scen.problem, flows, scen.reference, scen.name, out)
    out.write(f"{misses} reference entr{'y' if misses == 1 else 'ies'} outside tolerance\n")
    return EXIT_FAIL if misses else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nodemodel", description="Junction flows with relaxed FIFO and network loading.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-node", help="solve one junction scenario")
    p.add_argument("--scenario", required=True, help="node scenario JSON")
    p.add_argument("--variant", help="named variant inside the scenario")
    p.add_argument("--trace", action="store_true", help="print the per-iteration trace")
    p.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p.add_argument("--priority-preset", dest="priority_preset",
                   choices=("explicit", "capacity", "onramp", "constant", "demand"),
                   help="override the scenario's priorities")
    p.add_argument("--onramp", nargs="+", metavar="INPUT",
                   help="preferred input ids for --priority-preset onramp")
    p.set_defaults(func=cmd_solve_node)

    p = sub.add_parser("simulate", help="run a network scenario")
    p.add_argument("--scenario", required=True, help="network scenario JSON")
    p.add_argument("--variant", help="named variant inside the scenario")
    p.add_argument("--horizon", type=float, required=True, help="simulated seconds")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="audit a flow file against its scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--variant")
    p.add_argument("--flows", required=True, help="flow JSON as written by solve-node")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("reproduce", help="compare bundled scenarios with their references")
    p.add_argument("--scenario", nargs="*", help="node scenarios (default: all bundled)")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except ValidationError as exc:
        _emit_json(_violations_doc(exc), out)
        return EXIT_FAIL
    except ConfigError as exc:
        for problem in exc.problems:
            sys.stderr.write(f"error: {problem}\n")
        return EXIT_FAIL
    except SchemaError as exc:
        for e in exc.errors:
            sys.stderr.write(f"error: {e['path']}: {e['message']}\n")
        return EXIT_INPUT
    except ScenarioError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
