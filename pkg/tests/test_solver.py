from __future__ import annotations

import json

import numpy as np
import pytest

from nodemodel.intervals import EMPTY, FULL, IntervalSet
from nodemodel.problem import NodeProblem, ValidationError
from nodemodel.random_instances import random_problem
from nodemodel.solver import (
    reassign_zero_priorities,
    restriction_update,
    solve,
    solve_mimo,
    solve_miso,
    solve_simo,
)
from nodemodel.verifier import audit, reference_full_fifo

HALF_LOW = IntervalSet([(0.0, 0.5)])


# Worked junction with relaxed FIFO on inputs 2 and 4


def test_example_one_flows_by_hand(example_one):
    # Hand derivation: k=0 input 1 finishes; k=1 output 7 fills at
    # a = 850 / (300 + 941.18); k=2 output 8 fills at a = 1700 / (1600 + 750);
    # k=3 the rest finishes in free flow. Rectangles use the original demand
    # toward the filled output as the width denominator, e.g. input 3 gets
    # 100 * (1 - 542.553 / 600) blocked on each of outputs 5 and 6.
    f, _ = solve_mimo(example_one.problem)
    a7 = 850.0 / (300.0 + 16000.0 / 17.0)
    a8 = 1700.0 / (1600.0 + 750.0)
    f38 = 750.0 * a8
    expected = np.array([
        [0.0, 50.0, 150.0, 300.0],
        [100.0 - 100.0 * (1 - 1600.0 * a8 / 1600.0), 0.0, 300.0 * a7, 1600.0 * a8],
        [100.0 * f38 / 600.0, 100.0 * f38 / 600.0, 0.0, f38],
        [100.0, 800.0 - 400.0 * (1 - 16000.0 / 17.0 * a7 / 800.0), 16000.0 / 17.0 * a7, 0.0],
    ])
    np.testing.assert_allclose(f.movement, expected, rtol=0, atol=1e-9)
    np.testing.assert_allclose(f.leftover_supply(example_one.problem),
                               [1000 - expected[:, 0].sum(), 2000 - expected[:, 1].sum(), 0, 0],
                               atol=1e-9)


def test_example_one_trace(example_one):
    _, trace = solve_mimo(example_one.problem)
    assert trace.iteration_count == 4
    assert [it.branch for it in trace.iterations] == ["free", "congested", "congested", "free"]
    assert [it.most_restrictive for it in trace.iterations[:3]] == [2, 2, 3]
    k1 = trace.iterations[1]
    assert k1.filled == (2,) and k1.claimants == (1, 3)
    np.testing.assert_allclose(sorted(trace.iterations[0].factors.values()),
                               sorted([1000 / 342.647, 2000 / (100 + 125 + 16000 / 17),
                                       1000 / (300 + 300 + 16000 / 17), 2000 / 2950]), rtol=1e-4)
    np.testing.assert_allclose(trace.replay(), solve_mimo(example_one.problem)[0].f)
    json.dumps(trace.to_json())


def test_example_one_full_fifo(example_one_full):
    f, _ = solve_mimo(example_one_full.problem)
    np.testing.assert_allclose(f.movement[2], [100, 100, 0, 600])
    np.testing.assert_allclose(f.movement[1], [68.4832, 0, 205.4502, 1095.7346], atol=1e-3)
    np.testing.assert_allclose(f.movement[3], [80.5688, 644.5498, 644.5498, 0], atol=1e-3)
    np.testing.assert_allclose(f.f, reference_full_fifo(example_one_full.problem), atol=1e-9)


def test_restriction_update_rectangle():
    assert restriction_update(1600.0, EMPTY, HALF_LOW, 205.5, 300.0, 1600.0) == pytest.approx(1348.0)
    # Already-covered parts of the interval are not subtracted again.
    assert restriction_update(1000.0, HALF_LOW, HALF_LOW, 0.0, 10.0, 1600.0) == 1000.0
    assert restriction_update(10.0, EMPTY, FULL, 0.0, 10.0, 1600.0) == 0.0


def test_zero_priority_reset():
    assert reassign_zero_priorities([0.0, 0.0], []) == {}
    assert reassign_zero_priorities([0.0, 1.0], [0]) == {0: 1.0}


def test_onramp_preference_resets_to_equal_shares(example_two):
    from nodemodel.problem import onramp_preference

    p = onramp_preference(example_two.problem, [2])
    _, trace = solve_mimo(p)
    assert trace.iterations[0].effective_priority == {0: 0.0, 1: 0.0, 2: 1.0}
    later = [it.effective_priority for it in trace.iterations if 2 not in it.active]
    assert later and later[0] == {0: 0.5, 1: 0.5}


# Degenerate and edge cases


def test_zero_demand_gives_zero_flows():
    p = NodeProblem.create([0.0, 0.0], [[0.5, 0.5], [0.5, 0.5]], [10.0, 10.0], [1.0, 1.0])
    f, trace = solve_mimo(p)
    assert not f.f.any()
    assert trace.iteration_count <= 1


def test_zero_supply_blocks_everything_behind_it():
    p = NodeProblem.create([100.0], [[0.5, 0.5]], [0.0, 100.0], [1.0])
    f, _ = solve_mimo(p)
    assert not f.f.any()
    q = NodeProblem.create([100.0], [[0.5, 0.5]], [0.0, 100.0], [1.0], restriction={(0, 0, 1): []})
    g, _ = solve_mimo(q)
    assert g.movement.tolist() == [[0.0, 50.0]]


def test_all_zero_priorities_share_equally():
    p = NodeProblem.create([100.0, 100.0], [[1.0], [1.0]], [100.0], [0.0, 0.0])
    f, _ = solve_mimo(p)
    assert f.inflow.tolist() == [50.0, 50.0]


def test_validation_on_by_default():
    p = NodeProblem.create([100.0], [[0.5, 0.6]], [10.0, 10.0], [1.0])
    with pytest.raises(ValidationError):
        solve_mimo(p)
    with pytest.raises(ValidationError):
        solve(p)


def test_quiet_mode_skips_trace(example_one):
    _, trace = solve_mimo(example_one.problem, quiet=True)
    assert not trace.recorded and trace.iterations == []
    assert trace.iteration_count == 4
    with pytest.raises(ValueError):
        trace.replay()


def test_special_solvers_check_shape(example_one):
    with pytest.raises(ValueError):
        solve_miso(example_one.problem)
    with pytest.raises(ValueError):
        solve_simo(example_one.problem)


def test_multi_commodity_mix_is_preserved(example_two):
    f, _ = solve_mimo(example_two.problem)
    p = example_two.problem
    for i in range(p.M):
        for j in range(p.N):
            s = p.split[i, j] * p.demand[i]
            if f.f[i, j].sum() > 0:
                np.testing.assert_allclose(f.f[i, j] / f.f[i, j].sum(), s / s.sum(), atol=1e-12)


# Structural invariants on random instances


@pytest.mark.parametrize("seed", range(5))
def test_iteration_bound_and_monotone_supply(seed):
    rng = np.random.default_rng(seed)
    for _ in range(200):
        p = random_problem(rng, congested=bool(rng.integers(2)))
        _, trace = solve_mimo(p)
        movements = int(((p.split * p.demand[:, None, :]).sum(axis=2) > 0).sum())
        assert trace.iteration_count <= movements + p.N
        prev = p.supply.sum()
        prev_v = p.N + 1
        for it in trace.iterations:
            total = sum(it.remaining_supply)
            assert total <= prev + 1e-9
            assert len(it.unprocessed) <= prev_v
            prev, prev_v = total, len(it.unprocessed)


@pytest.mark.parametrize("seed", range(3))
def test_full_fifo_matches_link_level_reference(seed):
    rng = np.random.default_rng(100 + seed)
    for _ in range(300):
        p = random_problem(rng, full_fifo=True, zero_priority_prob=0.2)
        f, _ = solve_mimo(p, quiet=True)
        scale = max(1.0, p.demand.sum(axis=1).max(), p.supply.max())
        np.testing.assert_allclose(f.f, reference_full_fifo(p), rtol=0, atol=1e-9 * scale)


@pytest.mark.parametrize("seed", range(3))
def test_without_fifo_open_outputs_serve_all_demand(seed):
    rng = np.random.default_rng(200 + seed)
    for _ in range(300):
        p = random_problem(rng, no_fifo=True)
        f, _ = solve_mimo(p, quiet=True)
        s = (p.split * p.demand[:, None, :]).sum(axis=2)
        left = f.leftover_supply(p)
        for j in range(p.N):
            if left[j] > 1e-6:
                np.testing.assert_allclose(f.movement[:, j], s[:, j], atol=1e-9 * max(1, s.max()))
        assert audit(p, f).passed


def test_flows_never_exceed_demand_or_supply():
    rng = np.random.default_rng(7)
    for _ in range(500):
        p = random_problem(rng, congested=True)
        f, _ = solve_mimo(p, quiet=True)
        s = p.split * p.demand[:, None, :]
        assert (f.f >= -1e-12).all()
        assert (f.f <= s + 1e-9).all()
        assert (f.outflow <= p.supply + 1e-9).all()
