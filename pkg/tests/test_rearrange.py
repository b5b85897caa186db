import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tweezerkit.core import make_circular_array, make_rect_array, partition_quadrants, sample_occupancy
from tweezerkit.rearrange import (MoveStep, PlanError, assign_durations, check_non_crossing, execute_plan, oracle_min_steps,
                                  plan_from_text, plan_stats, plan_to_text, rect_quadrant, simulate_execution, tetris_plan)


def small_case(n, t, fill, seed):
    q = rect_quadrant(n, n, t, t)
    occ = np.random.default_rng(seed).random(n * n) < fill
    return q, occ


@given(st.integers(4, 9), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_plan_conserves_atoms_and_keeps_order(n, seed):
    t = n // 2
    q, occ = small_case(n, t, 0.6, seed)
    plan = tetris_plan(occ, q)
    geom = make_rect_array(n, n)
    final = execute_plan(occ, plan)
    assert final.sum() == occ.sum()
    for step in plan:
        assert check_non_crossing(step, geom)
        assert step.axis in ("row", "col")
        assert all(d > 0 for d in step.distances)


@pytest.mark.parametrize("seed", range(20))
def test_small_plans_fill_and_stay_near_optimal(seed):
    q, occ = small_case(5, 3, 0.6, seed)
    if occ.sum() < 9:
        pytest.skip("not enough atoms")
    plan = tetris_plan(occ, q, row_order="near")
    final = execute_plan(occ, plan)
    assert final[q.target_sites].all()
    best = oracle_min_steps(occ.reshape(5, 5), q.target)
    assert best <= len(plan) <= 3 * max(best, 1)


def test_oracle_hand_example():
    occ = np.zeros((3, 3), bool)
    occ[0, 2] = True
    target = np.zeros((3, 3), bool)
    target[0, 0] = True
    assert oracle_min_steps(occ, target) == 1
    occ = np.zeros((3, 3), bool)
    occ[2, 2] = True
    assert oracle_min_steps(occ, target) == 2


def test_full_target_needs_no_steps():
    q = rect_quadrant(6, 6, 3, 3)
    occ = np.zeros(36, bool)
    occ[q.target_sites] = True
    assert tetris_plan(occ, q) == []


def test_distances_match_geometry():
    g = make_circular_array()
    occ = sample_occupancy(g, 0.512, 3)
    q = partition_quadrants(g)[1]
    plan = tetris_plan(occ, q, g.spacing)
    pos = g.positions()
    for step in plan[:30]:
        d = np.linalg.norm(pos[step.destinations] - pos[step.sources], axis=1)
        np.testing.assert_allclose(d, step.distances, atol=1e-9)
    stats = plan_stats(plan, occ, q)
    assert stats.filled == stats.n_targets


def test_execute_rejects_empty_pickup_and_duplicates():
    occ = np.array([True, False, False])
    with pytest.raises(PlanError):
        execute_plan(occ, [MoveStep("row", 0, [1], [2], [7.2])])
    with pytest.raises(PlanError):
        execute_plan(occ, [MoveStep("row", 0, [0, 0], [1, 2], [7.2, 14.4])])


def test_text_round_trip():
    q, occ = small_case(8, 4, 0.6, 1)
    plan = tetris_plan(occ, q)
    assign_durations(plan)
    back = plan_from_text(plan_to_text(plan))
    assert len(back) == len(plan)
    for a, b in zip(plan, back):
        assert (a.axis, a.line, a.sources, a.destinations) == (b.axis, b.line, b.sources, b.destinations)
        assert b.duration == pytest.approx(1e-3)
        np.testing.assert_allclose(a.distances, b.distances, atol=1e-4)
    with pytest.raises(PlanError):
        plan_from_text("diag 0 1.0 - [] 1>2")


def test_execution_with_losses_matches_closed_form():
    # one atom, one step: survival is the product of two transfers
    occ = np.array([True, False])
    plan = [MoveStep("row", 0, [0], [1], [7.2], 1e-3)]
    out = simulate_execution(plan, occ, np.array([1]), transfer_survival=0.9, rng=0, n_trials=20_000)
    assert out.defect_free == pytest.approx(0.81, abs=0.01)
    out = simulate_execution(plan, occ, np.array([1]), vacuum_lifetime=1e-3, rng=0, n_trials=20_000)
    assert out.defect_free == pytest.approx(math.exp(-1), abs=0.01)
    out = simulate_execution(plan, occ, np.array([1]), rng=0, n_trials=10)
    assert out.defect_free == 1.0
