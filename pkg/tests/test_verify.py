import math
import random

import numpy as np
import pytest

from demoproof.fixtures import (
    TRADEOFF_BAD,
    TRADEOFF_GOAL,
    tradeoff_pomdp,
    tradeoff_spec,
    tradeoff_strategy,
)
from demoproof.gridworld import GridState
from demoproof.models import (
    Distribution,
    EXPECTED_COST,
    InvalidSpec,
    Mc,
    ObservationStrategy,
    Spec,
    induce_mc,
)
from demoproof.verify import (
    GAUSS_SEIDEL,
    JACOBI,
    NoConvergence,
    SAT,
    UNSAT,
    check_spec,
    conditional_expected_cost,
    heatmap,
    mdp_max_reach,
    occupancy,
    reach_avoid_prob,
)
from oracles import bounded_reach, expected_visits, random_mc_rows


def chain(rows, initial=0):
    return Mc(states=tuple(f"s{i}" for i in range(len(rows))), initial=initial,
              transitions=tuple(Distribution(row) for row in rows))


def test_tradeoff_fixture_values():
    pomdp = tradeoff_pomdp()
    mc = induce_mc(pomdp, tradeoff_strategy(1.0))
    res = reach_avoid_prob(mc, TRADEOFF_BAD, TRADEOFF_GOAL)
    assert abs(res.value_at_initial - 2 / 3) <= 1e-9
    for p in (0.25, 0.5, 0.75):
        mc = induce_mc(pomdp, tradeoff_strategy(p))
        res = reach_avoid_prob(mc, TRADEOFF_BAD, TRADEOFF_GOAL)
        assert abs(res.value_at_initial - (2 / 3 + p / 3)) <= 1e-9


def test_tradeoff_underlying_mdp_bound_is_one():
    pomdp = tradeoff_pomdp()
    res = mdp_max_reach(pomdp.mdp, TRADEOFF_BAD, TRADEOFF_GOAL)
    assert abs(res.value_at_initial - 1.0) <= 1e-9


def test_reach_trivial_cases():
    mc = chain([{1: 1.0}, {1: 1.0}])
    assert reach_avoid_prob(mc, set(), {0}).value_at_initial == 1.0
    res = reach_avoid_prob(mc, set(), {1})
    assert res.per_state_prob[1] == 1.0
    # unreachable goal is exactly zero via graph classification
    looped = chain([{0: 1.0}, {1: 1.0}])
    res = reach_avoid_prob(looped, set(), {1})
    assert res.value_at_initial == 0.0


def test_reach_agrees_with_bounded_enumeration_oracle():
    failures = 0
    for seed in range(100):
        rng = random.Random(seed)
        rows, bad, goal = random_mc_rows(rng)
        mc = chain([dict(r) for r in rows])
        res = reach_avoid_prob(mc, bad, goal)
        oracle = bounded_reach(rows, bad, goal, horizon=10_000)
        for s in range(len(rows)):
            if abs(res.per_state_prob[s] - oracle[s]) > 1e-6:
                failures += 1
    assert failures == 0


def test_gauss_seidel_and_jacobi_agree():
    for seed in range(40):
        rng = random.Random(1000 + seed)
        rows, bad, goal = random_mc_rows(rng)
        mc = chain([dict(r) for r in rows])
        gs = reach_avoid_prob(mc, bad, goal, method=GAUSS_SEIDEL)
        ja = reach_avoid_prob(mc, bad, goal, method=JACOBI)
        assert np.max(np.abs(gs.per_state_prob - ja.per_state_prob)) <= 1e-8
    pomdp = tradeoff_pomdp()
    mc = induce_mc(pomdp, tradeoff_strategy(0.5))
    gs = reach_avoid_prob(mc, TRADEOFF_BAD, TRADEOFF_GOAL, method=GAUSS_SEIDEL)
    ja = reach_avoid_prob(mc, TRADEOFF_BAD, TRADEOFF_GOAL, method=JACOBI)
    assert abs(gs.value_at_initial - ja.value_at_initial) <= 1e-8


def test_iterates_are_monotone_from_below():
    # looser tolerances stop earlier on the same rising sequence, so their
    # values can only sit below the tight-tolerance fixed point
    for seed in range(25):
        rng = random.Random(2000 + seed)
        rows, bad, goal = random_mc_rows(rng)
        mc = chain([dict(r) for r in rows])
        loose = reach_avoid_prob(mc, bad, goal, tol=1e-3)
        tight = reach_avoid_prob(mc, bad, goal, tol=1e-12)
        assert np.all(loose.per_state_prob <= tight.per_state_prob + 1e-12)


def test_expected_cost_corridor_and_mixture():
    corridor = chain([{1: 1.0}, {2: 1.0}, {3: 1.0}, {3: 1.0}])
    assert conditional_expected_cost(corridor, set(), {3}) == pytest.approx(
        3.0, abs=1e-9)
    # two ways to the goal: one step with probability one half, or three
    mixture = chain([{3: 0.5, 1: 0.5}, {2: 1.0}, {3: 1.0}, {3: 1.0}])
    assert conditional_expected_cost(mixture, set(), {3}) == pytest.approx(
        2.0, abs=1e-9)


def test_expected_cost_undefined_when_goal_unreachable():
    looped = chain([{0: 1.0}, {1: 1.0}])
    assert conditional_expected_cost(looped, set(), {1}) is None


def test_expected_cost_conditions_on_success():
    # crash half the time immediately; successful paths take exactly one step
    mc = chain([{1: 0.5, 2: 0.5}, {1: 1.0}, {2: 1.0}])
    cost = conditional_expected_cost(mc, {2}, {1})
    assert cost == pytest.approx(1.0, abs=1e-9)


def test_expected_cost_zero_when_starting_at_goal():
    mc = chain([{0: 1.0}])
    assert conditional_expected_cost(mc, set(), {0}) == pytest.approx(0.0)


def test_check_spec_thresholds():
    pomdp = tradeoff_pomdp()
    mc = induce_mc(pomdp, tradeoff_strategy(0.5))
    assert check_spec(mc, tradeoff_spec(0.8)).verdict == SAT
    assert check_spec(mc, tradeoff_spec(0.9)).verdict == UNSAT
    assert check_spec(mc, tradeoff_spec(0.0)).verdict == SAT
    looped = chain([{0: 1.0}, {1: 1.0}])
    spec = Spec(kind="reach-avoid-prob", bad=frozenset(), goal=frozenset({1}),
                threshold=0.1)
    assert check_spec(looped, spec).verdict == UNSAT


def test_check_spec_cost_kind():
    corridor = chain([{1: 1.0}, {2: 1.0}, {3: 1.0}, {3: 1.0}])
    tight = Spec(kind=EXPECTED_COST, bad=frozenset(), goal=frozenset({3}),
                 threshold=2.5)
    loose = Spec(kind=EXPECTED_COST, bad=frozenset(), goal=frozenset({3}),
                 threshold=3.0)
    assert check_spec(corridor, tight).verdict == UNSAT
    res = check_spec(corridor, loose)
    assert res.verdict == SAT
    assert res.conditional_expected_cost == pytest.approx(3.0, abs=1e-9)
    assert res.value_at_initial == pytest.approx(1.0)


def test_overlapping_sets_rejected():
    mc = chain([{1: 1.0}, {1: 1.0}])
    with pytest.raises(InvalidSpec):
        reach_avoid_prob(mc, {1}, {1})


def test_no_convergence_reports_residual():
    slow = chain([{0: 1 - 1e-6, 1: 1e-6}, {1: 1.0}])
    with pytest.raises(NoConvergence) as err:
        reach_avoid_prob(slow, set(), {1}, method=JACOBI, max_iter=5)
    assert err.value.residual > 0.0


def test_mc_viewed_as_mdp_gives_identical_values():
    pomdp = tradeoff_pomdp()
    for p in (0.25, 0.5, 1.0):
        mc = induce_mc(pomdp, tradeoff_strategy(p))
        direct = reach_avoid_prob(mc, TRADEOFF_BAD, TRADEOFF_GOAL)
        via_mdp = mdp_max_reach(mc.to_mdp(), TRADEOFF_BAD, TRADEOFF_GOAL)
        assert np.array_equal(direct.per_state_prob, via_mdp.per_state_prob)


def test_bound_dominates_observation_strategies(quad_model):
    rng = random.Random(17)
    bound = mdp_max_reach(quad_model.pomdp.mdp, quad_model.bad, quad_model.goal)
    assert bound.value_at_initial == pytest.approx(1.0, abs=1e-9)
    pomdp = quad_model.pomdp
    for _ in range(10):
        rows = []
        for z in range(pomdp.num_observations):
            weights = [rng.random() + 1e-3 for _ in range(4)]
            total = sum(weights)
            rows.append(Distribution({a: w / total for a, w in enumerate(weights)}))
        sigma = ObservationStrategy(choice=tuple(rows))
        value = reach_avoid_prob(induce_mc(pomdp, sigma), quad_model.bad,
                                 quad_model.goal).value_at_initial
        assert value <= bound.value_at_initial + 1e-8


def test_occupancy_against_rollout_oracle():
    for seed in range(30):
        rng = random.Random(3000 + seed)
        rows, bad, goal = random_mc_rows(rng)
        mc = chain([dict(r) for r in rows])
        eta = occupancy(mc, stop=bad | goal)
        oracle = expected_visits(rows, 0, bad | goal)
        for s in range(len(rows)):
            if math.isinf(eta[s]):
                # recurrent and reachable: the rollout keeps accumulating
                assert oracle[s] > 100.0
            else:
                assert eta[s] == pytest.approx(oracle[s], abs=1e-6)


def test_occupancy_corridor_counts_each_state_once():
    corridor = chain([{1: 1.0}, {2: 1.0}, {3: 1.0}, {3: 1.0}])
    eta = occupancy(corridor, stop={3})
    assert list(eta) == [1.0, 1.0, 1.0, 0.0]


def test_occupancy_marks_reachable_loops_infinite():
    mc = chain([{1: 0.5, 2: 0.5}, {1: 1.0}, {2: 1.0}])
    eta = occupancy(mc, stop={2})
    assert eta[0] == 1.0
    assert math.isinf(eta[1])


def test_heatmap_shape_and_goal_cell(quad_model, family_training_set):
    from demoproof.cloning import initial_strategy

    sigma = initial_strategy(family_training_set, quad_model.pomdp)
    grid = heatmap(quad_model, sigma)
    config = quad_model.config
    assert len(grid) == config.height
    assert all(len(row) == config.width for row in grid)
    gx, gy = config.goal
    assert grid[gy][gx] == pytest.approx(1.0, abs=1e-9)
    for y in range(config.height):
        for x in range(config.width):
            value = grid[y][x]
            if (x, y) in config.landmarks or (x, y) == config.obstacle_start:
                assert value is None
            else:
                assert 0.0 <= value <= 1.0


def test_heatmap_cells_satisfy_fixed_point_locally(quad_model, family_training_set):
    from demoproof.cloning import initial_strategy

    sigma = initial_strategy(family_training_set, quad_model.pomdp)
    mc = induce_mc(quad_model.pomdp, sigma)
    res = reach_avoid_prob(mc, quad_model.bad, quad_model.goal)
    grid = heatmap(quad_model, sigma)
    config = quad_model.config
    x, y = 2, 3  # free cell adjacent to the goal
    sid = quad_model.state_id(GridState(agent=(x, y),
                                        obstacle=config.obstacle_start))
    expected = sum(p * res.per_state_prob[t] for t, p in mc.transitions[sid].entries)
    assert grid[y][x] == pytest.approx(expected, abs=1e-9)
