import random
from collections import Counter

import pytest

from demoproof.gridworld import (
    ACTIONS,
    CRASH_OBS,
    EVENT_CRASH,
    EVENT_GOAL,
    GridState,
    InvalidRanges,
    InvalidScenario,
    ObsVector,
    RANDOM_START,
    ScenarioConfig,
    ScenarioRanges,
    build_pomdp,
    load_scenario,
    obstacle_step,
    observe,
    random_scenario,
    save_scenario,
    simulate_step,
)
from demoproof.models import validate
from demoproof.verify import mdp_max_reach


def basic_config(**overrides):
    fields = dict(width=4, height=4, landmarks=frozenset({(1, 2)}),
                  obstacle_start=(2, 0), goal=(3, 3), agent_start=(0, 0),
                  rng_seed=7)
    fields.update(overrides)
    return ScenarioConfig(**fields)


def test_scenario_invariants():
    with pytest.raises(InvalidScenario):
        basic_config(goal=(1, 2))  # on a landmark
    with pytest.raises(InvalidScenario):
        basic_config(obstacle_start=(3, 3))  # on the goal
    with pytest.raises(InvalidScenario):
        basic_config(agent_start=(2, 0))  # on the obstacle
    with pytest.raises(InvalidScenario):
        basic_config(width=2)
    with pytest.raises(InvalidScenario):
        basic_config(agent_start=(9, 9))


def test_observe_corner_walls():
    # agent in the bottom-left corner, nothing else adjacent: the five
    # wall-side bits fire, the three inward bits stay clear
    config = basic_config()
    z = observe(GridState(agent=(0, 0), obstacle=(3, 0)), config)
    assert z.bits == (1, 1, 1, 0, 0, 0, 1, 1)


def test_observe_single_obstacle_bits():
    config = ScenarioConfig(width=5, height=5, landmarks=frozenset(),
                            obstacle_start=(1, 1), goal=(4, 4),
                            agent_start=(2, 2), rng_seed=0)
    down_left = observe(GridState(agent=(2, 2), obstacle=(1, 1)), config)
    assert down_left.bits == (1, 0, 0, 0, 0, 0, 0, 0)
    up_right = observe(GridState(agent=(2, 2), obstacle=(3, 3)), config)
    assert up_right.bits == (0, 0, 0, 0, 1, 0, 0, 0)


def test_observe_is_pure():
    config = basic_config()
    state = GridState(agent=(1, 1), obstacle=(2, 2))
    assert observe(state, config) == observe(state, config)


def test_obs_vector_string_code_round_trip():
    z = ObsVector((1, 0, 0, 0, 1, 0, 1, 1))
    assert z.as_string() == "10001011"
    assert ObsVector.from_string(z.as_string()) == z
    assert ObsVector.from_code(z.code) == z


def test_obstacle_step_laws():
    config = ScenarioConfig(width=4, height=4, landmarks=frozenset({(1, 0)}),
                            obstacle_start=(2, 2), goal=(3, 3),
                            agent_start=(0, 0), rng_seed=0)
    interior = obstacle_step((2, 2), config)
    assert interior.support == ((1, 2), (2, 1), (2, 3), (3, 2))
    assert all(p == 0.25 for _, p in interior.entries)
    corner = obstacle_step((0, 0), config)
    # (1, 0) is a landmark, so only the upward move remains
    assert corner.support == ((0, 1),)
    boxed = ScenarioConfig(width=3, height=3,
                           landmarks=frozenset({(1, 0), (0, 1)}),
                           obstacle_start=(0, 0), goal=(2, 2),
                           agent_start=(2, 0), rng_seed=0)
    assert obstacle_step((0, 0), boxed).support == ((0, 0),)


def test_obstacle_corner_two_moves():
    config = ScenarioConfig(width=4, height=4, landmarks=frozenset(),
                            obstacle_start=(0, 0), goal=(3, 3),
                            agent_start=(2, 2), rng_seed=0)
    corner = obstacle_step((0, 0), config)
    assert corner.support == ((0, 1), (1, 0))
    assert all(p == 0.5 for _, p in corner.entries)


def test_build_pomdp_state_count_matches_enumeration():
    config = basic_config()
    model = build_pomdp(config)
    # oracle: independent enumeration of (agent, obstacle) pairs plus the sink
    positions = [(x, y) for x in range(config.width) for y in range(config.height)]
    assert model.num_states == len(positions) ** 2 + 1
    assert model.num_states == 257
    assert model.sink == 256


def test_build_pomdp_passes_validation_on_random_family():
    rng = random.Random(99)
    ranges = ScenarioRanges(width=(3, 6), height=(3, 6), num_landmarks=(0, 2))
    for _ in range(100):
        config = random_scenario(rng, ranges)
        if config.agent_start == RANDOM_START:
            continue
        model = build_pomdp(config)
        assert validate(model.pomdp) == []
        assert len(model.pomdp.observations) <= 257  # 256 vectors + crash


def test_build_pomdp_rows_stochastic_and_sinks_absorbing(quad_model):
    pomdp = quad_model.pomdp
    for s in range(pomdp.mdp.num_states):
        for a, dist in pomdp.mdp.transitions[s].items():
            assert abs(sum(p for _, p in dist.entries) - 1.0) <= 1e-9
    for s in quad_model.goal:
        for dist in pomdp.mdp.transitions[s].values():
            assert dist.support == (s,)
    for dist in pomdp.mdp.transitions[quad_model.sink].values():
        assert dist.support == (quad_model.sink,)


def test_build_pomdp_labels(quad_model):
    config = quad_model.config
    for sid in quad_model.goal:
        state = quad_model.grid_states[sid]
        assert state.agent == config.goal and state.agent != state.obstacle
    for sid in quad_model.bad:
        if sid == quad_model.sink:
            continue
        state = quad_model.grid_states[sid]
        assert state.agent == state.obstacle or state.agent in config.landmarks
    assert quad_model.pomdp.observations[
        quad_model.pomdp.obs_map[quad_model.sink]] == CRASH_OBS


def test_build_pomdp_rejects_random_start_without_override():
    config = basic_config(agent_start=RANDOM_START)
    with pytest.raises(InvalidScenario):
        build_pomdp(config)
    model = build_pomdp(config, agent_start=(0, 0))
    assert model.grid_states[model.pomdp.mdp.initial].agent == (0, 0)


def test_frozen_obstacle_degenerates_to_deterministic_mdp():
    config = ScenarioConfig(width=3, height=3, landmarks=frozenset(),
                            obstacle_start=(2, 0), goal=(2, 2),
                            agent_start=(0, 0), rng_seed=3,
                            freeze_obstacle=True)
    model = build_pomdp(config)
    for s in range(model.num_states):
        for dist in model.pomdp.mdp.transitions[s].values():
            assert dist.is_dirac()
    bound = mdp_max_reach(model.pomdp.mdp, model.bad, model.goal)
    assert bound.value_at_initial == pytest.approx(1.0, abs=1e-9)
    # with deterministic motion every free start cell can reach the goal
    for start in config.free_positions():
        sid = model.state_id(GridState(agent=start,
                                       obstacle=config.obstacle_start))
        assert bound.per_state_prob[sid] == pytest.approx(1.0, abs=1e-9)


def test_simulate_step_events():
    config = basic_config()
    rng = random.Random(0)
    # agent adjacent left of the goal, obstacle far away
    state = GridState(agent=(2, 3), obstacle=(0, 0))
    for _ in range(50):
        _, event = simulate_step(state, "right", config, rng)
        assert event == EVENT_GOAL
    # stepping onto a landmark is a crash no matter where the obstacle goes
    state = GridState(agent=(1, 1), obstacle=(3, 3))
    for _ in range(50):
        _, event = simulate_step(state, "up", config, rng)
        assert event == EVENT_CRASH


def test_simulate_step_matches_transition_row(quad_model):
    # Monte-Carlo check of the live dynamics against the explicit model row
    config = quad_model.config
    state = GridState(agent=(1, 1), obstacle=(2, 2))
    sid = quad_model.state_id(state)
    action_id = ACTIONS.index("up")
    row = quad_model.pomdp.mdp.transitions[sid][action_id]
    rng = random.Random(123)
    samples = 100_000
    counts = Counter()
    for _ in range(samples):
        nxt, _ = simulate_step(state, "up", config, rng)
        counts[quad_model.state_id(nxt)] += 1
    assert set(counts) == set(row.support)
    for target, p in row.entries:
        assert abs(counts[target] / samples - p) <= 0.01


def test_random_scenario_determinism_and_ranges():
    ranges = ScenarioRanges(width=(4, 11), height=(4, 11), num_landmarks=(1, 3))
    a = random_scenario(random.Random(5), ranges)
    b = random_scenario(random.Random(5), ranges)
    assert a == b
    for seed in range(30):
        config = random_scenario(random.Random(seed), ranges)
        assert 4 <= config.width <= 11 and 4 <= config.height <= 11
        assert 1 <= len(config.landmarks) <= 3
    with pytest.raises(InvalidRanges):
        ScenarioRanges(width=(5, 4))
    with pytest.raises(InvalidRanges):
        ScenarioRanges(width=(2, 3))


def test_random_scenario_fixed_ranges_give_exact_shape():
    ranges = ScenarioRanges(width=(4, 4), height=(5, 5), num_landmarks=(2, 2))
    config = random_scenario(random.Random(11), ranges)
    assert (config.width, config.height, len(config.landmarks)) == (4, 5, 2)


def test_scenario_file_round_trip(tmp_path):
    config = basic_config()
    path = tmp_path / "scenario.json"
    save_scenario(path, config)
    assert load_scenario(path) == config
    again = tmp_path / "scenario2.json"
    save_scenario(again, load_scenario(path))
    assert path.read_bytes() == again.read_bytes()
