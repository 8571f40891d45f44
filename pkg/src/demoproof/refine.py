"""Counterexample-guided strategy refinement.

When a check refutes the requirement, the states where the strategy is weak
but which the chain actually visits are ranked most critical: the score is
the per-state reach-avoid value divided by the expected number of visits, so
low-value, frequently visited states sort first. Demonstration sessions are
then started exactly at those states; each session's action choices are
folded back into the strategy row of every observation it visited, weighting
the chosen action by the reciprocal of the observation's current expected
success mass and renormalizing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from demoproof.cloning import initial_strategy, strategy_sha256, table_from_strategy
from demoproof.gridworld import EVENT_NONE, ScenarioModel, classify
from demoproof.models import (
    Distribution,
    Mc,
    ModelError,
    ObservationStrategy,
    Pomdp,
    Spec,
    induce_mc,
    observation_prior,
)
from demoproof.training import OUTCOME_GOAL, TrainingSet, Trajectory, run_episode
from demoproof.util import derive_seed
from demoproof.verify import (
    CheckResult,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    GAUSS_SEIDEL,
    SAT,
    check_spec,
    occupancy,
)

WEIGHT_FLOOR = 1e-3
PLATEAU_DELTA = 1e-3


class NoCounterexampleNeeded(ModelError):
    """Raised when a counterexample is requested for a satisfied spec."""


@dataclass(frozen=True)
class Counterexample:
    critical_states: Tuple[int, ...]
    scores: Mapping[int, float]
    strategy_snapshot: str = ""


def critical_states(mc: Mc, check: CheckResult, spec: Spec, k: int,
                    strategy_snapshot: str = "") -> Counterexample:
    """The k most critical reachable states outside the bad and goal sets."""
    if check.verdict == SAT:
        raise NoCounterexampleNeeded("specification already satisfied")
    if k <= 0:
        return Counterexample(critical_states=(), scores={},
                              strategy_snapshot=strategy_snapshot)
    visits = occupancy(mc, stop=spec.bad | spec.goal)
    w = check.per_state_prob
    scores: Dict[int, float] = {}
    for s in range(mc.num_states):
        if s in spec.bad or s in spec.goal or visits[s] <= 0.0:
            continue
        scores[s] = 0.0 if np.isinf(visits[s]) else float(w[s] / visits[s])
    ranked = sorted(scores, key=lambda s: (scores[s], s))
    return Counterexample(critical_states=tuple(ranked[:k]), scores=scores,
                          strategy_snapshot=strategy_snapshot)


def refinement_weight(pomdp: Pomdp, obs: int, chosen: int,
                      per_state_prob: np.ndarray, *,
                      floor: float = WEIGHT_FLOOR) -> Dict[int, float]:
    """Update weights for one observation: the chosen action is boosted by
    the reciprocal of the observation's expected success mass (clamped away
    from a zero denominator); every other action keeps weight 1."""
    prior = observation_prior(pomdp, obs)
    mass = sum(p * float(per_state_prob[s]) for s, p in prior.entries)
    weight = 1.0 / max(mass, floor)
    pre = pomdp.preimage(obs)
    enabled = pomdp.mdp.enabled(pre[0])
    return {a: (weight if a == chosen else 1.0) for a in enabled}


def bayes_update(strategy: ObservationStrategy, obs: int, chosen: int,
                 weights: Mapping[int, float]) -> ObservationStrategy:
    """Multiply one strategy row entrywise by the weights and renormalize.

    Zero entries stay zero, so refinement never resurrects actions the
    cloned strategy ruled out.
    """
    row = strategy.row(obs)
    scaled = {a: p * weights.get(a, 1.0) for a, p in row.entries}
    total = sum(scaled.values())
    if total <= 0.0:
        raise ModelError(f"weighted row at observation {obs} lost all mass")
    return strategy.replace_row(obs, Distribution(
        {a: v / total for a, v in scaled.items()}))


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    value: float
    cost: Optional[float]
    strategy_hash: str
    num_sessions: int
    critical_states: Tuple[int, ...]

    def to_obj(self) -> dict:
        return {
            "iter": self.iteration,
            "prob": self.value,
            "cost": self.cost,
            "strategy_hash": self.strategy_hash,
            "num_sessions": self.num_sessions,
            "critical_states": list(self.critical_states),
        }


@dataclass
class RefineResult:
    strategy: ObservationStrategy
    history: List[IterationRecord]
    tables: List[dict]
    stop_reason: str


def _session_updates(trajectory: Trajectory) -> List[Tuple[str, str]]:
    """Per distinct observation, the action chosen at its last visit."""
    last: Dict[str, str] = {}
    for step in trajectory.steps:
        last[step.obs] = step.action
    return sorted(last.items())


def refine_loop(model: ScenarioModel, spec: Spec, training: TrainingSet, *,
                max_iters: int = 10, k: int = 5, seed: int = 0,
                noise: float = 0.1, session_max_steps: Optional[int] = None,
                method: str = GAUSS_SEIDEL, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER,
                plateau: float = PLATEAU_DELTA) -> RefineResult:
    """Clone, check, and refine until SAT, a value plateau, or max_iters.

    Each refinement iteration extracts up to k critical states, runs one
    scripted demonstration session immersed at each (the demonstrator sees
    only observations, never the true state), applies the Bayesian row
    updates in session order, and re-checks. History entry i carries the
    value and strategy hash after i refinement rounds.
    """
    pomdp = model.pomdp
    obs_index = {name: z for z, name in enumerate(pomdp.observations)}
    action_index = {name: a for a, name in enumerate(pomdp.mdp.actions)}

    strategy = initial_strategy(training, pomdp)
    result = check_spec(induce_mc(pomdp, strategy), spec, method=method,
                        tol=tol, max_iter=max_iter, with_cost=True)
    history: List[IterationRecord] = []
    tables: List[dict] = []

    def push(iteration: int, res: CheckResult, sessions: int,
             critical: Tuple[int, ...]) -> str:
        table = table_from_strategy(pomdp, strategy)
        tables.append(table)
        record = IterationRecord(
            iteration=iteration, value=res.value_at_initial,
            cost=res.conditional_expected_cost,
            strategy_hash=strategy_sha256(table), num_sessions=sessions,
            critical_states=critical)
        history.append(record)
        return record.strategy_hash

    snapshot = push(0, result, 0, ())
    stop_reason = "max-iters"
    if result.verdict == SAT:
        stop_reason = "sat"
        max_iters = 0

    for iteration in range(1, max_iters + 1):
        cx = critical_states(induce_mc(pomdp, strategy), result, spec, k,
                             strategy_snapshot=snapshot)
        if not cx.critical_states:
            stop_reason = "no-candidates"
            break
        for j, sid in enumerate(cx.critical_states):
            start = model.grid_states[sid]
            if start is None or classify(start, model.config) != EVENT_NONE:
                continue
            session_seed = derive_seed("refine", seed, iteration, j)
            trajectory = run_episode(
                model.config, seed=session_seed, noise=noise,
                max_steps=session_max_steps, start_state=start,
                session_id=f"refine-{iteration}-{j}")
            if trajectory.outcome != OUTCOME_GOAL:
                # crashed or aborted sessions are not demonstrations worth
                # imitating; skipping them keeps the loop from reinforcing
                # noise moves that led into the obstacle
                continue
            for obs_name, action_name in _session_updates(trajectory):
                z = obs_index.get(obs_name)
                if z is None:
                    continue
                chosen = action_index[action_name]
                weights = refinement_weight(pomdp, z, chosen,
                                            result.per_state_prob)
                strategy = bayes_update(strategy, z, chosen, weights)
        new_result = check_spec(induce_mc(pomdp, strategy), spec, method=method,
                                tol=tol, max_iter=max_iter, with_cost=True)
        snapshot = push(iteration, new_result, len(cx.critical_states),
                        cx.critical_states)
        if new_result.verdict == SAT:
            result = new_result
            stop_reason = "sat"
            break
        if abs(new_result.value_at_initial - result.value_at_initial) < plateau:
            result = new_result
            stop_reason = "plateau"
            break
        result = new_result

    return RefineResult(strategy=strategy, history=history, tables=tables,
                        stop_reason=stop_reason)
