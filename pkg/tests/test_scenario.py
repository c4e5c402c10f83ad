from __future__ import annotations

import copy

import numpy as np
import pytest

from nodemodel.intervals import IntervalSet
from nodemodel.scenario import (
    DimensionError,
    ScenarioIOError,
    SchemaError,
    bundled,
    bundled_names,
    flows_from_document,
    flows_to_document,
    load_document,
    node_from_document,
    node_to_document,
    read_json,
    validate_document,
)
from nodemodel.solver import solve_mimo


@pytest.fixture
def one_doc():
    return read_json(bundled("example_one.json"))


def test_every_bundled_scenario_is_schema_valid():
    kinds = {name: validate_document(read_json(bundled(name))) for name in bundled_names()}
    assert kinds["diverge.json"] == "network" and kinds["example_one.json"] == "node"


def test_unknown_fields_are_rejected(one_doc):
    one_doc["links"] = []
    with pytest.raises(SchemaError) as err:
        validate_document(one_doc, "node")
    assert err.value.errors[0]["path"] == "$"


def test_wrong_kind_and_version(one_doc):
    with pytest.raises(SchemaError):
        validate_document(one_doc, "network")
    one_doc["schema_version"] = 2
    with pytest.raises(SchemaError):
        validate_document(one_doc)
    with pytest.raises(SchemaError):
        validate_document([1, 2])


def test_negative_demand_fails_schema_with_path(one_doc):
    one_doc["demand"][1] = -5
    with pytest.raises(SchemaError) as err:
        validate_document(one_doc)
    assert err.value.errors[0]["path"].startswith("$['demand'][1]")


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ScenarioIOError):
        read_json(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioIOError, match="invalid JSON at line 1"):
        load_document(bad)
    with pytest.raises(ScenarioIOError):
        bundled("nothing.json")


def test_eta_entries_become_intervals(one_doc):
    p = node_from_document(one_doc).problem
    assert p.restriction[1][2][3] == IntervalSet([(0.0, 0.5)])
    assert p.restriction[1][0][2].is_empty()
    assert p.restriction[0][0][1].is_full()


def test_dimension_errors(one_doc):
    doc = copy.deepcopy(one_doc)
    doc["supply"] = doc["supply"][:3]
    with pytest.raises(DimensionError, match="supply"):
        node_from_document(doc)
    doc = copy.deepcopy(one_doc)
    doc["split"][0] = doc["split"][0][:2]
    with pytest.raises(DimensionError):
        node_from_document(doc)
    doc = copy.deepcopy(one_doc)
    doc["eta"][0]["restricted"] = "99"
    with pytest.raises(DimensionError):
        node_from_document(doc)


def test_variants_override_fields():
    doc = read_json(bundled("example_two.json"))
    base = node_from_document(doc).problem
    demand = node_from_document(doc, "demand").problem
    onramp = node_from_document(doc, "onramp").problem
    np.testing.assert_allclose(demand.priority, base.demand.sum(axis=1))
    assert onramp.priority.tolist() == [0.0, 0.0, 1.0]
    with pytest.raises(DimensionError):
        node_from_document(doc, "missing")


def test_node_document_round_trip(one_doc):
    scen = node_from_document(one_doc)
    doc = node_to_document(scen.problem, name="copy")
    validate_document(doc, "node")
    again = node_from_document(doc).problem
    np.testing.assert_array_equal(again.split, scen.problem.split)
    np.testing.assert_array_equal(again.priority, scen.problem.priority)
    assert again.restriction == scen.problem.restriction
    np.testing.assert_array_equal(solve_mimo(again)[0].f, solve_mimo(scen.problem)[0].f)


def test_flow_document_round_trip_and_checks(one_doc):
    p = node_from_document(one_doc).problem
    flows, trace = solve_mimo(p)
    doc = flows_to_document(flows, p, scenario="example_one", trace=trace)
    validate_document(doc, "flows")
    np.testing.assert_array_equal(flows_from_document(doc, p).f, flows.f)
    bad = copy.deepcopy(doc)
    bad["outputs"] = ["5", "6", "7", "9"]
    with pytest.raises(DimensionError, match="outputs"):
        flows_from_document(bad, p)
    bad = copy.deepcopy(doc)
    bad["flows"][0].append([1.0])
    with pytest.raises(DimensionError, match="shape"):
        flows_from_document(bad, p)
