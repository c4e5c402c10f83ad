"""JSON scenario documents: loading, schema validation and conversion.

Three document kinds share one envelope (``schema_version`` and ``kind``):

* ``node``: one junction, with arrays indexed by the ``inputs`` and
  ``outputs`` id lists and a sparse ``eta`` list of restriction intervals.
* ``flows``: a solved flow array ``flows[i][j][c]``, optionally with a trace.
* ``network``: a cell-transmission network (see :mod:`nodemodel.network`).

Unknown fields are rejected by the shipped JSON schemas.
"""

from __future__ import annotations

import copy
import json
import warnings
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
from referencing import Registry, Resource

from .intervals import IntervalSet
from .problem import (
    DemandPriorityWarning,
    FlowMatrix,
    NodeProblem,
    capacity_priorities,
    constant_priorities,
    demand_priorities,
    onramp_preference,
)

SCHEMA_VERSION = 1
KINDS = ("node", "flows", "network")


class ScenarioError(Exception):
    """Base class for document problems."""


class ScenarioIOError(ScenarioError):
    """File missing, unreadable or not JSON."""


class SchemaError(ScenarioError):
    """Document does not match its schema; ``errors`` lists each mismatch."""

    def __init__(self, errors: list[dict]):
        self.errors = errors
        head = "; ".join(f"{e['path']}: {e['message']}" for e in errors[:3])
        super().__init__(f"schema validation failed: {head}")


class DimensionError(ScenarioError):
    """Array sizes disagree with the declared links or commodities."""


@lru_cache(maxsize=None)
def _registry() -> tuple[Registry, dict[str, dict]]:
    root = resources.files("nodemodel") / "schemas"
    schemas = {}
    for name in ("common", "node", "flows", "network"):
        schemas[name] = json.loads((root / f"{name}.schema.json").read_text(encoding="utf-8"))
    registry = Registry().with_resources(
        (s["$id"], Resource.from_contents(s)) for s in schemas.values()
    )
    return registry, schemas


def schema(kind: str) -> dict:
    """Returns the JSON schema for a document kind."""
    return _registry()[1][kind]


def read_json(path: str | Path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioIOError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def validate_document(doc: Any, kind: str | None = None) -> str:
    """Checks a document against its schema and returns its kind."""
    if not isinstance(doc, dict):
        raise SchemaError([{"path": "$", "message": "document must be a JSON object"}])
    found = doc.get("kind")
    if found not in KINDS:
        raise SchemaError([{"path": "$.kind", "message": f"unknown kind {found!r}"}])
    if kind is not None and found != kind:
        raise SchemaError([{"path": "$.kind", "message": f"expected {kind!r}, got {found!r}"}])
    registry, schemas = _registry()
    validator = jsonschema.Draft202012Validator(schemas[found], registry=registry)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise SchemaError([
            {"path": "$" + "".join(f"[{p!r}]" for p in e.absolute_path), "message": e.message}
            for e in errors
        ])
    return found


def load_document(path: str | Path, kind: str | None = None) -> dict:
    doc = read_json(path)
    validate_document(doc, kind)
    return doc


# Node documents


@dataclass(frozen=True)
class NodeScenario:
    """A parsed node document with its optional published reference."""

    name: str
    problem: NodeProblem
    commodities: tuple[str, ...]
    reference: dict | None
    document: dict


def apply_variant(doc: dict, variant: str | None) -> dict:
    """Returns a copy of ``doc`` with the named variant's overrides applied."""
    if variant is None:
        return doc
    variants = doc.get("variants", {})
    if variant not in variants:
        known = ", ".join(sorted(variants)) or "none"
        raise DimensionError(f"unknown variant {variant!r} (available: {known})")
    out = copy.deepcopy(doc)
    out.pop("variants", None)
    for key, value in variants[variant].items():
        if key != "description":
            out[key] = copy.deepcopy(value)
    out["name"] = f"{doc.get('name', 'node')}:{variant}"
    return out


def _commodity_array(rows: list, M: int, what: str) -> np.ndarray:
    """Normalizes per-input entries that are scalars or per-commodity lists."""
    if len(rows) != M:
        raise DimensionError(f"{what} has {len(rows)} entries, expected {M}")
    if all(isinstance(r, (int, float)) for r in rows):
        return np.asarray(rows, dtype=float)[:, None]
    if any(isinstance(r, (int, float)) for r in rows):
        raise DimensionError(f"{what} mixes scalar and per-commodity entries")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DimensionError(f"{what} rows have differing commodity counts {sorted(widths)}")
    return np.asarray(rows, dtype=float)


def split_array(ratios: list, M: int, N: int, C: int, what: str = "split") -> np.ndarray:
    """Parses ``ratios[i][j]`` (scalars or per-commodity lists) into (M, N, C)."""
    if len(ratios) != M:
        raise DimensionError(f"{what} has {len(ratios)} rows, expected {M} (one per input)")
    out = np.zeros((M, N, C))
    for i, row in enumerate(ratios):
        if not isinstance(row, list) or len(row) != N:
            raise DimensionError(f"{what}[{i}] must list {N} outputs")
        for j, entry in enumerate(row):
            if isinstance(entry, (int, float)):
                out[i, j, :] = float(entry)
            elif isinstance(entry, list) and len(entry) == C:
                out[i, j, :] = entry
            else:
                raise DimensionError(f"{what}[{i}][{j}] must be a number or {C} numbers")
    return out


def eta_mapping(entries: list[dict], inputs: list[str], outputs: list[str]) -> dict:
    """Maps sparse ``eta`` entries to ``{(i, restricting, restricted): IntervalSet}``."""
    in_pos = {k: n for n, k in enumerate(inputs)}
    out_pos = {k: n for n, k in enumerate(outputs)}
    out = {}
    for e in entries:
        for key, table in (("input", in_pos), ("restricting", out_pos), ("restricted", out_pos)):
            if e[key] not in table:
                raise DimensionError(f"eta entry refers to unknown link {e[key]!r} as {key}")
        try:
            interval = IntervalSet.from_json(e["interval"])
        except ValueError as exc:
            raise DimensionError(f"eta entry {e}: {exc}") from exc
        out[(in_pos[e["input"]], out_pos[e["restricting"]], out_pos[e["restricted"]])] = interval
    return out


def eta_entries(problem: NodeProblem) -> list[dict]:
    """Sparse ``eta`` list holding every off-diagonal entry that is not full."""
    out = []
    for i in range(problem.M):
        for a in range(problem.N):
            for b in range(problem.N):
                iv = problem.restriction[i][a][b]
                if a != b and not iv.is_full():
                    out.append({
                        "input": problem.input_ids[i],
                        "restricting": problem.output_ids[a],
                        "restricted": problem.output_ids[b],
                        "interval": iv.to_json(),
                    })
    return out


def apply_priority_preset(problem: NodeProblem, preset: str, onramp=()) -> NodeProblem:
    """Replaces priorities according to a named scheme.

    ``onramp`` lists preferred input ids for the ``onramp`` scheme: those get
    priority 1 and every other input 0.
    """
    if preset == "explicit":
        return problem
    if preset == "capacity":
        return capacity_priorities(problem)
    if preset == "constant":
        return constant_priorities(problem)
    if preset == "demand":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DemandPriorityWarning)
            return demand_priorities(problem)
    if preset == "onramp":
        if not onramp:
            raise DimensionError("onramp preset needs at least one preferred input id")
        pos = {k: n for n, k in enumerate(problem.input_ids)}
        missing = [k for k in onramp if k not in pos]
        if missing:
            raise DimensionError(f"onramp refers to unknown inputs {missing}")
        return onramp_preference(problem, [pos[k] for k in onramp])
    raise DimensionError(f"unknown priority preset {preset!r}")


def node_from_document(doc: dict, variant: str | None = None) -> NodeScenario:
    """Builds a :class:`NodeScenario`; the document must already be schema-valid."""
    doc = apply_variant(doc, variant)
    inputs, outputs = list(doc["inputs"]), list(doc["outputs"])
    M, N = len(inputs), len(outputs)
    demand = _commodity_array(doc["demand"], M, "demand")
    C = demand.shape[1]
    commodities = tuple(doc.get("commodities") or [str(c + 1) for c in range(C)])
    if len(commodities) != C:
        raise DimensionError(f"{len(commodities)} commodity names for {C} commodities")
    split = split_array(doc["split"], M, N, C)
    if len(doc["supply"]) != N:
        raise DimensionError(f"supply has {len(doc['supply'])} entries, expected {N}")
    preset = doc.get("priority_preset", "explicit")
    if "priority" in doc:
        priority = doc["priority"]
    elif preset == "explicit":
        raise DimensionError("priority is required unless a priority_preset is given")
    else:
        priority = [0.0] * M
    if len(priority) != M:
        raise DimensionError(f"priority has {len(priority)} entries, expected {M}")
    capacity = doc.get("capacity")
    if capacity is not None and len(capacity) != M:
        raise DimensionError(f"capacity has {len(capacity)} entries, expected {M}")
    eta = eta_mapping(doc.get("eta", []), inputs, outputs)
    problem = NodeProblem.create(
        demand, split, doc["supply"], priority, capacity=capacity, restriction=eta,
        input_ids=inputs, output_ids=outputs,
    )
    problem = apply_priority_preset(problem, preset, doc.get("onramp", ()))
    return NodeScenario(doc.get("name", "node"), problem, commodities, doc.get("reference"), doc)


def load_node(path: str | Path, variant: str | None = None) -> NodeScenario:
    return node_from_document(load_document(path, "node"), variant)


def node_to_document(problem: NodeProblem, *, name: str | None = None,
                     commodities: tuple[str, ...] | None = None) -> dict:
    """Serializes a problem with explicit priorities."""
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "kind": "node"}
    if name:
        doc["name"] = name
    doc["inputs"] = list(problem.input_ids)
    doc["outputs"] = list(problem.output_ids)
    if commodities:
        doc["commodities"] = list(commodities)
    doc["demand"] = problem.demand.tolist()
    doc["split"] = problem.split.tolist()
    doc["supply"] = problem.supply.tolist()
    doc["priority"] = problem.priority.tolist()
    if problem.capacity is not None:
        doc["capacity"] = problem.capacity.tolist()
    doc["eta"] = eta_entries(problem)
    return doc


# Flow documents


def flows_to_document(flows: FlowMatrix, problem: NodeProblem, *, scenario: str | None = None,
                      commodities: tuple[str, ...] | None = None, trace=None) -> dict:
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "kind": "flows"}
    if scenario:
        doc["scenario"] = scenario
    doc["inputs"] = list(problem.input_ids)
    doc["outputs"] = list(problem.output_ids)
    if commodities:
        doc["commodities"] = list(commodities)
    doc["flows"] = flows.f.tolist()
    doc["movement_totals"] = flows.movement.tolist()
    doc["leftover_supply"] = flows.leftover_supply(problem).tolist()
    if trace is not None and trace.recorded:
        doc["trace"] = trace.to_json()
    return doc


def flows_from_document(doc: dict, problem: NodeProblem) -> FlowMatrix:
    """Reads a flow array and checks it against the problem's links."""
    if list(doc["inputs"]) != list(problem.input_ids):
        raise DimensionError(
            f"flow file inputs {doc['inputs']} do not match scenario inputs {list(problem.input_ids)}")
    if list(doc["outputs"]) != list(problem.output_ids):
        raise DimensionError(
            f"flow file outputs {doc['outputs']} do not match scenario outputs {list(problem.output_ids)}")
    raw = doc["flows"]
    M, N, C = problem.M, problem.N, problem.C
    if len(raw) != M or any(len(row) != N or any(len(x) != C for x in row) for row in raw):
        raise DimensionError(f"flows must have shape ({M}, {N}, {C})")
    f = np.asarray(raw, dtype=float)
    return FlowMatrix(f, problem.input_ids, problem.output_ids)


def load_flows(path: str | Path, problem: NodeProblem) -> FlowMatrix:
    return flows_from_document(load_document(path, "flows"), problem)


def write_json(path: str | Path, doc: Any) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``"example_one.json"``."""
    path = Path(str(resources.files("nodemodel") / "data" / name))
    if not path.exists():
        raise ScenarioIOError(f"no bundled scenario named {name!r}")
    return path


def bundled_names() -> list[str]:
    root = resources.files("nodemodel") / "data"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))
