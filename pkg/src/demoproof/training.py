"""Demonstration capture: trajectories, the action-count training set, the
sample-size bound, and a scripted demonstrator for headless runs.

The training set is keyed by (observation bit-string, action name), so data
collected across differently sized scenarios pools into one table. Trajectory
logs are the source of truth; a training set can always be rebuilt from them.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from demoproof.gridworld import (
    ACTIONS,
    ACTION_BIT,
    EVENT_CRASH,
    EVENT_GOAL,
    EVENT_NONE,
    GridState,
    ObsVector,
    RANDOM_START,
    ScenarioConfig,
    classify,
    move_agent,
    observe,
    obstacle_step,
    simulate_step,
    static_bits,
)
from demoproof.models import ModelError
from demoproof.util import derive_seed, sha256_hex

OUTCOME_GOAL = "goal"
OUTCOME_CRASH = "crash"
OUTCOME_ABORT = "abort"


class InvalidParams(ModelError):
    pass


class RejectedTrajectory(ModelError):
    pass


def hoeffding_min_samples(epsilon: float, delta: float, efficiency: float = 1.0) -> int:
    """Minimum demonstration count for deviation bound epsilon at confidence
    1 - delta; an efficiency factor > 1 divides the raw bound before rounding."""
    if not (0.0 < epsilon <= 1.0):
        raise InvalidParams(f"epsilon {epsilon} outside (0, 1]")
    if not (0.0 < delta < 1.0):
        raise InvalidParams(f"delta {delta} outside (0, 1)")
    if efficiency < 1.0:
        raise InvalidParams(f"efficiency factor {efficiency} below 1")
    bound = math.log(2.0 / delta) / (2.0 * epsilon * epsilon)
    return math.ceil(bound / efficiency)


@dataclass(frozen=True)
class TrajectoryStep:
    state: GridState
    obs: str
    action: str
    event: str


@dataclass(frozen=True)
class Trajectory:
    scenario: ScenarioConfig
    steps: Tuple[TrajectoryStep, ...]
    outcome: str
    session_id: str = ""
    seed: Optional[int] = None

    def to_obj(self) -> dict:
        obj = {
            "v": 1,
            "session_id": self.session_id,
            "scenario": self.scenario.to_obj(),
            "steps": [
                {
                    "state": [s.state.agent[0], s.state.agent[1],
                              s.state.obstacle[0], s.state.obstacle[1]],
                    "obs": s.obs,
                    "action": s.action,
                    "event": s.event,
                }
                for s in self.steps
            ],
            "outcome": self.outcome,
        }
        if self.seed is not None:
            obj["seed"] = self.seed
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "Trajectory":
        steps = tuple(
            TrajectoryStep(
                state=GridState(agent=(s["state"][0], s["state"][1]),
                                obstacle=(s["state"][2], s["state"][3])),
                obs=s["obs"],
                action=s["action"],
                event=s["event"],
            )
            for s in obj["steps"]
        )
        return cls(
            scenario=ScenarioConfig.from_obj(obj["scenario"]),
            steps=steps,
            outcome=obj["outcome"],
            session_id=obj.get("session_id", ""),
            seed=obj.get("seed"),
        )


def write_trajectories(path, trajectories: Iterable[Trajectory]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trajectories:
            fh.write(json.dumps(t.to_obj(), sort_keys=True, separators=(",", ":")) + "\n")


def read_trajectories(path) -> List[Trajectory]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(Trajectory.from_obj(json.loads(line)))
    return out


class TrainingSet:
    """Immutable action-choice counts per observation."""

    __slots__ = ("_counts", "_size")

    def __init__(self, counts: Optional[Mapping[Tuple[str, str], int]] = None):
        clean = {}
        for key, n in (counts or {}).items():
            n = int(n)
            if n < 0:
                raise InvalidParams(f"negative count for {key}")
            if n > 0:
                clean[(str(key[0]), str(key[1]))] = n
        self._counts = clean
        self._size = sum(clean.values())

    @property
    def size(self) -> int:
        return self._size

    @property
    def counts(self) -> Dict[Tuple[str, str], int]:
        return dict(self._counts)

    def count(self, obs: str, action: str) -> int:
        return self._counts.get((obs, action), 0)

    def total_for(self, obs: str) -> int:
        return sum(n for (z, _), n in self._counts.items() if z == obs)

    def observations(self) -> Tuple[str, ...]:
        return tuple(sorted({z for z, _ in self._counts}))

    def conditional(self, obs: str) -> Dict[str, float]:
        """Empirical action distribution at one observation (empty if no data)."""
        total = self.total_for(obs)
        if total == 0:
            return {}
        return {a: self._counts.get((obs, a), 0) / total for a in ACTIONS}

    def merged(self, other: "TrainingSet") -> "TrainingSet":
        counts = dict(self._counts)
        for key, n in other._counts.items():
            counts[key] = counts.get(key, 0) + n
        return TrainingSet(counts)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["obs_bits", "action", "count"])
        for (z, a), n in sorted(self._counts.items()):
            writer.writerow([z, a, n])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainingSet":
        counts: Dict[Tuple[str, str], int] = {}
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["obs_bits", "action", "count"]:
            raise InvalidParams("unexpected training-set CSV header")
        for z, a, n in reader:
            counts[(z, a)] = counts.get((z, a), 0) + int(n)
        return cls(counts)

    def sha256(self) -> str:
        return sha256_hex(self.to_csv())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TrainingSet) and self._counts == other._counts

    def __repr__(self) -> str:
        return f"TrainingSet(size={self._size}, observations={len(self.observations())})"


def _check_trajectory(trajectory: Trajectory) -> None:
    config = trajectory.scenario
    for i, step in enumerate(trajectory.steps):
        if observe(step.state, config).as_string() != step.obs:
            raise RejectedTrajectory(f"step {i}: stored observation mismatch")
        if step.action not in ACTIONS:
            raise RejectedTrajectory(f"step {i}: unknown action {step.action!r}")
        if i < len(trajectory.steps) - 1 and step.event != EVENT_NONE:
            raise RejectedTrajectory(f"step {i}: terminal event before the last step")
        if classify(step.state, config) != EVENT_NONE:
            raise RejectedTrajectory(f"step {i}: acting in a terminal state")
    if trajectory.steps:
        last = trajectory.steps[-1].event
        expected = {EVENT_GOAL: OUTCOME_GOAL, EVENT_CRASH: OUTCOME_CRASH,
                    EVENT_NONE: OUTCOME_ABORT}[last]
        if trajectory.outcome != expected:
            raise RejectedTrajectory(
                f"outcome {trajectory.outcome!r} inconsistent with last event {last!r}")


def record(ts: TrainingSet, trajectory: Trajectory) -> TrainingSet:
    """Fold one validated trajectory into the counts (returns a new set)."""
    _check_trajectory(trajectory)
    counts = ts.counts
    for step in trajectory.steps:
        key = (step.obs, step.action)
        counts[key] = counts.get(key, 0) + 1
    return TrainingSet(counts)


def training_set_from(trajectories: Iterable[Trajectory]) -> TrainingSet:
    ts = TrainingSet()
    for t in trajectories:
        ts = record(ts, t)
    return ts


def saturation_check(before: TrainingSet, after: TrainingSet, epsilon: float) -> bool:
    """True when the per-observation empirical conditionals moved by at most
    epsilon (L-infinity), over observations with data in both snapshots.
    Observations present in only one snapshot are skipped, so sets with
    disjoint support compare as saturated."""
    if epsilon <= 0:
        raise InvalidParams("epsilon must be positive")
    shared = set(before.observations()) & set(after.observations())
    for z in shared:
        pa, pb = before.conditional(z), after.conditional(z)
        for a in ACTIONS:
            if abs(pa.get(a, 0.0) - pb.get(a, 0.0)) > epsilon:
                return False
    return True


# --- scripted demonstrator ---------------------------------------------------


@lru_cache(maxsize=128)
def _static_signatures(config: ScenarioConfig) -> Dict[Tuple[int, int], int]:
    return {cell: static_bits(cell, config).code
            for cell in config.positions() if cell not in config.landmarks}


def init_belief(config: ScenarioConfig, z: ObsVector) -> Dict[Tuple[int, int], float]:
    """Uniform position belief over cells consistent with the first observation."""
    sig = _static_signatures(config)
    zc = z.code
    consistent = [c for c, s in sig.items() if _explains(s, zc)]
    if not consistent:
        consistent = list(sig.keys())
    p = 1.0 / len(consistent)
    return {c: p for c in consistent}


def _explains(static_code: int, obs_code: int) -> bool:
    # static bits must all be present; at most one extra bit (the obstacle)
    if static_code & ~obs_code:
        return False
    return bin(obs_code & ~static_code).count("1") <= 1


def update_belief(belief: Dict[Tuple[int, int], float], action: str,
                  z: ObsVector, config: ScenarioConfig) -> Dict[Tuple[int, int], float]:
    """Shift the belief by the deterministic agent move, then condition on the
    new observation; resets to the observation prior if the mass dies out."""
    sig = _static_signatures(config)
    zc = z.code
    shifted: Dict[Tuple[int, int], float] = {}
    for cell, p in belief.items():
        nxt = move_agent(cell, action, config)
        shifted[nxt] = shifted.get(nxt, 0.0) + p
    posterior = {c: p for c, p in shifted.items()
                 if c in sig and _explains(sig[c], zc)}
    total = sum(posterior.values())
    if total <= 0.0:
        return init_belief(config, z)
    return {c: p / total for c, p in posterior.items()}


class _ScenarioFilter:
    """Shared per-config tables for the joint (agent, obstacle) Bayes filter."""

    def __init__(self, config: ScenarioConfig):
        import numpy as np
        from scipy import sparse

        self.config = config
        self.np = np
        positions = config.positions()
        self.positions = positions
        self.index = {p: i for i, p in enumerate(positions)}
        n = len(positions)
        self.agent_ok = np.array(
            [p not in config.landmarks for p in positions], dtype=bool)
        # deterministic agent shift per action (blocked moves stay)
        self.shift = {
            a: np.array([self.index[move_agent(p, a, config)] for p in positions])
            for a in ACTIONS
        }
        rows, cols, data = [], [], []
        for i, p in enumerate(positions):
            for q, prob in obstacle_step(p, config).entries:
                rows.append(i)
                cols.append(self.index[q])
                data.append(prob)
        self.obstacle = sparse.csr_array((data, (rows, cols)), shape=(n, n))
        self.obstacle_t = self.obstacle.T.tocsr()
        # observation code per joint state; -1 marks states a running session
        # can never be in (crashed, or already at the goal)
        codes = np.full((n, n), -1, dtype=np.int16)
        goal_i = self.index[config.goal]
        for i, a_pos in enumerate(positions):
            if not self.agent_ok[i] or i == goal_i:
                continue
            for j, o_pos in enumerate(positions):
                if i == j:
                    continue
                codes[i, j] = observe(GridState(agent=a_pos, obstacle=o_pos),
                                      config).code
        self.codes = codes
        self.live = codes >= 0
        self._masks: Dict[int, "np.ndarray"] = {}

    def mask(self, code: int):
        m = self._masks.get(code)
        if m is None:
            m = self.codes == code
            self._masks[code] = m
        return m

    def initial(self, code: int):
        np = self.np
        b = (self.mask(code) & self.live).astype(float)
        total = b.sum()
        if total <= 0.0:
            b = self.live.astype(float)
            total = b.sum()
        return b / total

    def predict(self, belief, action: str):
        np = self.np
        shifted = np.zeros_like(belief)
        np.add.at(shifted, self.shift[action], belief)
        return (self.obstacle_t @ shifted.T).T

    def condition(self, belief, code: int):
        posterior = belief * self.mask(code)
        total = posterior.sum()
        if total <= 0.0:
            return self.initial(code)
        return posterior / total


@lru_cache(maxsize=32)
def _scenario_filter(config: ScenarioConfig) -> _ScenarioFilter:
    return _ScenarioFilter(config)


class ScriptedDemonstrator:
    """Stand-in for a human operator.

    Maintains an exact Bayes filter over the joint (agent, obstacle) state
    given the known static map and the observation history; the exposed
    position belief is its agent marginal. While that marginal is diffuse it
    explores with the legal move minimizing the expected posterior position
    entropy; once confident it descends greedily toward the goal. Moves whose
    collision risk under the filter exceeds the tolerance are deferred when a
    safer move exists, an observed-occupied cell is never entered unless all
    four are, and a noise parameter occasionally substitutes a random legal
    move to emulate human imperfection.
    """

    def __init__(self, config: ScenarioConfig, noise: float = 0.1,
                 confidence: float = 0.9, risk_tolerance: float = 0.15):
        if not (0.0 <= noise <= 1.0):
            raise InvalidParams(f"noise {noise} outside [0, 1]")
        self.config = config
        self.noise = noise
        self.confidence = confidence
        self.risk_tolerance = risk_tolerance
        self._filter = _scenario_filter(config)
        self._joint = None

    def reset(self, z: ObsVector) -> None:
        self._joint = self._filter.initial(z.code)
        self._last_obs = z

    def update(self, action: str, z: ObsVector) -> None:
        if self._joint is None:
            self.reset(z)
            return
        self._joint = self._filter.condition(
            self._filter.predict(self._joint, action), z.code)
        self._last_obs = z

    def agent_belief(self) -> Dict[Tuple[int, int], float]:
        """Agent-position marginal of the joint filter."""
        if self._joint is None:
            raise InvalidParams("demonstrator not reset with an observation")
        marginal = self._joint.sum(axis=1)
        return {p: float(marginal[i]) for i, p in enumerate(self._filter.positions)
                if marginal[i] > 0.0}

    def set_position_belief(self, belief: Dict[Tuple[int, int], float],
                            z: ObsVector) -> None:
        """Seed the filter from a bare position belief (obstacle unknown)."""
        np = self._filter.np
        n = len(self._filter.positions)
        joint = np.zeros((n, n))
        for cell, p in belief.items():
            joint[self._filter.index[cell], :] = p / n
        self._joint = self._filter.condition(joint, z.code)
        self._last_obs = z

    def legal_actions(self, z: ObsVector) -> List[str]:
        return [a for a in ACTIONS if not z.bits[ACTION_BIT[a]]]

    def _risks(self, legal: List[str]) -> Dict[str, float]:
        np = self._filter.np
        # landing[a, o'] = P(agent at a, obstacle moves to o')
        landing = (self._filter.obstacle_t @ self._joint.T).T
        risks = {}
        for action in legal:
            tgt = self._filter.shift[action]
            risks[action] = float(landing[np.arange(landing.shape[0]), tgt].sum())
        return risks

    def act(self, rng) -> str:
        if self._joint is None:
            raise InvalidParams("demonstrator not reset with an observation")
        z = self._last_obs
        legal = self.legal_actions(z)
        if not legal:
            return ACTIONS[rng.randrange(len(ACTIONS))]
        if self.noise > 0.0 and rng.random() < self.noise:
            return legal[rng.randrange(len(legal))]
        risks = self._risks(legal)
        marginal = self.agent_belief()
        here = min(marginal, key=lambda c: (-marginal[c], c))
        if max(marginal.values()) < self.confidence:
            return self._explore(legal, risks)
        return self._exploit(legal, risks, here)

    def _explore(self, legal: List[str], risks: Dict[str, float]) -> str:
        np = self._filter.np
        n = len(self._filter.positions)
        best: Tuple = ()
        choice = legal[0]
        codes = self._filter.codes.ravel()
        agent_rows = np.repeat(np.arange(n), n)
        for rank, action in enumerate(legal):
            predicted = self._filter.predict(self._joint, action) * self._filter.live
            acc = np.zeros((257, n))
            np.add.at(acc, (codes, agent_rows), predicted.ravel())
            group_mass = acc.sum(axis=1)
            score = 0.0
            for c in np.where(group_mass > 0.0)[0]:
                if c == 256:  # dead mass (session would have ended)
                    continue
                m = acc[c] / group_mass[c]
                m = m[m > 0.0]
                score += group_mass[c] * float(-(m * np.log(m)).sum())
            key = (risks[action] > self.risk_tolerance, score, rank)
            if not best or key < best:
                best, choice = key, action
        return choice

    def _exploit(self, legal: List[str], risks: Dict[str, float],
                 here: Tuple[int, int]) -> str:
        goal = self.config.goal
        best: Tuple = ()
        choice = legal[0]
        for rank, action in enumerate(legal):
            nxt = move_agent(here, action, self.config)
            d = abs(nxt[0] - goal[0]) + abs(nxt[1] - goal[1])
            key = (risks[action] > self.risk_tolerance, d, risks[action], rank)
            if not best or key < best:
                best, choice = key, action
        return choice


def scripted_demonstrator(config: ScenarioConfig, belief: Dict[Tuple[int, int], float],
                          z: ObsVector, rng, noise: float = 0.1) -> str:
    """One decision from a bare position belief and the current observation.

    Callers that track only a position belief (init_belief/update_belief) get
    the same policy with the obstacle part of the filter freshly conditioned
    on the observation alone.
    """
    demonstrator = ScriptedDemonstrator(config, noise=noise)
    demonstrator.set_position_belief(belief, z)
    return demonstrator.act(rng)


def run_episode(config: ScenarioConfig, *, seed: int, noise: float = 0.1,
                max_steps: Optional[int] = None,
                start_state: Optional[GridState] = None,
                session_id: str = "") -> Trajectory:
    """Play one scripted episode to goal/crash (or abort at the step cap).

    Environment randomness and demonstrator randomness use separate streams
    derived from the seed, so stored trajectories replay exactly against the
    environment stream alone.
    """
    import random as _random

    env_rng = _random.Random(derive_seed("env", seed))
    pol_rng = _random.Random(derive_seed("policy", seed))
    if max_steps is None:
        max_steps = 4 * (config.width + config.height)

    if start_state is None:
        if config.agent_start == RANDOM_START:
            free = config.free_positions()
            agent = free[env_rng.randrange(len(free))]
        else:
            agent = config.agent_start  # type: ignore[assignment]
        state = GridState(agent=agent, obstacle=config.obstacle_start)
    else:
        state = start_state
    if classify(state, config) != EVENT_NONE:
        raise InvalidParams("episode cannot start in a terminal state")

    demonstrator = ScriptedDemonstrator(config, noise=noise)
    demonstrator.reset(observe(state, config))
    steps: List[TrajectoryStep] = []
    outcome = OUTCOME_ABORT
    for _ in range(max_steps):
        z = observe(state, config)
        action = demonstrator.act(pol_rng)
        nxt, event = simulate_step(state, action, config, env_rng)
        steps.append(TrajectoryStep(state=state, obs=z.as_string(),
                                    action=action, event=event))
        if event == EVENT_GOAL:
            outcome = OUTCOME_GOAL
            break
        if event == EVENT_CRASH:
            outcome = OUTCOME_CRASH
            break
        demonstrator.update(action, observe(nxt, config))
        state = nxt
    return Trajectory(scenario=config, steps=tuple(steps), outcome=outcome,
                      session_id=session_id, seed=seed)
