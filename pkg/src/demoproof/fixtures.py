"""Bundled regression model: randomization trading off memory.

An eight-state POMDP whose three middle states share one observation
("blue") but need different actions. Committing to "up" everywhere reaches
the target with probability 2/3; mixing up/down with probability p lifts the
value to 2/3 + p/3 (strictly below 1); resolving the states with full
observability reaches the target with probability 1. These three closed-form
values make the fixture a sharp oracle for the checker, the induced-chain
construction, and the MDP bound.
"""

from __future__ import annotations

from demoproof.models import Distribution, Mdp, ObservationStrategy, Pomdp, REACH_AVOID, Spec

TRADEOFF_GOAL = frozenset({7})
TRADEOFF_BAD: frozenset = frozenset()

_A, _UP, _DOWN = 0, 1, 2


def tradeoff_pomdp() -> Pomdp:
    states = tuple(f"s{i}" for i in range(8))
    actions = ("a", "up", "down")
    # observation per state: s0..s2 unique, s3/s4/s5 share "blue"
    observations = ("red", "green", "yellow", "blue", "sink", "goal")
    obs_map = (0, 1, 2, 3, 3, 3, 4, 5)
    transitions = (
        {_A: Distribution({1: 2 / 3, 2: 1 / 3})},
        {_A: Distribution({3: 0.5, 4: 0.5})},
        {_A: Distribution.dirac(5)},
        {_UP: Distribution.dirac(3), _DOWN: Distribution.dirac(7)},
        {_UP: Distribution.dirac(7), _DOWN: Distribution.dirac(4)},
        {_UP: Distribution.dirac(7), _DOWN: Distribution.dirac(6)},
        {_A: Distribution.dirac(6)},
        {_A: Distribution.dirac(7)},
    )
    mdp = Mdp(states=states, initial=0, actions=actions, transitions=transitions)
    return Pomdp(mdp=mdp, observations=observations, obs_map=obs_map)


def tradeoff_strategy(p_up: float) -> ObservationStrategy:
    """Single-action observations act deterministically; the shared "blue"
    observation goes up with probability p_up."""
    dirac_a = Distribution.dirac(_A)
    if p_up >= 1.0:
        blue = Distribution.dirac(_UP)
    elif p_up <= 0.0:
        blue = Distribution.dirac(_DOWN)
    else:
        blue = Distribution({_UP: p_up, _DOWN: 1.0 - p_up})
    return ObservationStrategy(choice=(dirac_a, dirac_a, dirac_a, blue,
                                       dirac_a, dirac_a))


def tradeoff_spec(threshold: float) -> Spec:
    return Spec(kind=REACH_AVOID, bad=TRADEOFF_BAD, goal=TRADEOFF_GOAL,
                threshold=threshold)


def tradeoff_value(p_up: float) -> float:
    """Closed-form reach value of the mixed strategy (0 < p_up < 1)."""
    return 2 / 3 + p_up / 3
