"""Core probabilistic model types and the strategy-induced chain construction.

States, actions and observations are dense integer indices; human-readable
names live in separate name tables on the model objects. Distributions are
sparse and sorted by outcome so iteration order and serialization are
reproducible. All types are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping, Tuple, Union

PROB_ATOL = 1e-9


class ModelError(Exception):
    """Base class for model construction errors."""


class InvalidDistribution(ModelError):
    pass


class StrategyIncomplete(ModelError):
    """The strategy does not define a choice for some observation."""


class IllegalSupport(ModelError):
    """The strategy puts probability on an action that is not enabled."""


class UnknownObservation(ModelError):
    pass


class InvalidSpec(ModelError):
    """Bad/goal sets overlap or a threshold is out of range."""


class Distribution:
    """Finite probability distribution with deterministic entry order.

    Zero-probability outcomes are dropped, entries are sorted by outcome, and
    the total mass must be 1 within PROB_ATOL: smaller deviations are
    renormalized away (they are float noise), larger ones are rejected as
    modeling bugs.
    """

    __slots__ = ("_entries",)

    def __init__(self, probs: Union[Mapping[Any, float], Iterable[Tuple[Any, float]]]):
        acc: dict = {}
        pairs = probs.items() if isinstance(probs, Mapping) else probs
        for outcome, p in pairs:
            p = float(p)
            if p < 0.0 or math.isnan(p):
                raise InvalidDistribution(f"bad probability {p!r} for outcome {outcome!r}")
            if p > 0.0:
                acc[outcome] = acc.get(outcome, 0.0) + p
        if not acc:
            raise InvalidDistribution("empty support")
        total = math.fsum(acc.values())
        if abs(total - 1.0) > PROB_ATOL:
            raise InvalidDistribution(f"probabilities sum to {total!r}")
        if total != 1.0:
            acc = {o: p / total for o, p in acc.items()}
        self._entries = tuple(sorted(acc.items()))

    @classmethod
    def dirac(cls, outcome: Any) -> "Distribution":
        return cls({outcome: 1.0})

    @classmethod
    def uniform(cls, outcomes: Iterable[Any]) -> "Distribution":
        items = list(outcomes)
        if not items:
            raise InvalidDistribution("uniform over empty set")
        return cls({o: 1.0 / len(items) for o in items})

    @classmethod
    def unchecked(cls, pairs: Iterable[Tuple[Any, float]]) -> "Distribution":
        """Bypass validation; only for constructing deliberately broken models
        (e.g. validate() test rigs and diagnostics)."""
        self = object.__new__(cls)
        self._entries = tuple(pairs)
        return self

    @property
    def entries(self) -> Tuple[Tuple[Any, float], ...]:
        return self._entries

    def items(self) -> Tuple[Tuple[Any, float], ...]:
        return self._entries

    @property
    def support(self) -> Tuple[Any, ...]:
        return tuple(o for o, _ in self._entries)

    def prob(self, outcome: Any) -> float:
        for o, p in self._entries:
            if o == outcome:
                return p
        return 0.0

    def is_dirac(self) -> bool:
        return len(self._entries) == 1

    def sample(self, rng) -> Any:
        u = rng.random()
        acc = 0.0
        for outcome, p in self._entries:
            acc += p
            if u < acc:
                return outcome
        return self._entries[-1][0]

    def total(self) -> float:
        return math.fsum(p for _, p in self._entries)

    def __iter__(self) -> Iterator[Tuple[Any, float]]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Distribution) and self._entries == other._entries

    def __hash__(self) -> int:
        return hash(self._entries)

    def __repr__(self) -> str:
        inner = ", ".join(f"{o!r}: {p:.6g}" for o, p in self._entries)
        return f"Distribution({{{inner}}})"


@dataclass(frozen=True)
class Mdp:
    """Finite MDP: name tables plus one {action-id: Distribution} row per state.

    The transition map may be partial per state; the enabled actions of a
    state are exactly the keys of its row.
    """

    states: Tuple[str, ...]
    initial: int
    actions: Tuple[str, ...]
    transitions: Tuple[Mapping[int, Distribution], ...]

    def __post_init__(self):
        if len(self.transitions) != len(self.states):
            raise ModelError("one transition row required per state")
        if not (0 <= self.initial < len(self.states)):
            raise ModelError(f"initial state {self.initial} out of range")

    @property
    def num_states(self) -> int:
        return len(self.states)

    def enabled(self, state: int) -> Tuple[int, ...]:
        return tuple(sorted(self.transitions[state].keys()))


@dataclass(frozen=True)
class Mc:
    """Discrete-time Markov chain: an MDP with the single action erased."""

    states: Tuple[str, ...]
    initial: int
    transitions: Tuple[Distribution, ...]

    def __post_init__(self):
        if len(self.transitions) != len(self.states):
            raise ModelError("one transition row required per state")
        if not (0 <= self.initial < len(self.states)):
            raise ModelError(f"initial state {self.initial} out of range")

    @property
    def num_states(self) -> int:
        return len(self.states)

    def to_mdp(self, action_name: str = "step") -> Mdp:
        return Mdp(
            states=self.states,
            initial=self.initial,
            actions=(action_name,),
            transitions=tuple({0: row} for row in self.transitions),
        )


@dataclass(frozen=True)
class Pomdp:
    """POMDP: underlying MDP plus an observation alphabet and state map.

    States that share an observation must have equal enabled-action sets, so
    an observation-based choice is well defined on every state.
    """

    mdp: Mdp
    observations: Tuple[str, ...]
    obs_map: Tuple[int, ...]

    def __post_init__(self):
        if len(self.obs_map) != self.mdp.num_states:
            raise ModelError("obs_map must cover every state")

    @property
    def num_observations(self) -> int:
        return len(self.observations)

    def preimage(self, obs: int) -> Tuple[int, ...]:
        return tuple(s for s, z in enumerate(self.obs_map) if z == obs)


@dataclass(frozen=True)
class ObservationStrategy:
    """Memoryless randomized strategy: one action distribution per observation."""

    choice: Tuple[Distribution, ...]

    def row(self, obs: int) -> Distribution:
        if not (0 <= obs < len(self.choice)):
            raise StrategyIncomplete(f"no choice for observation {obs}")
        return self.choice[obs]

    def replace_row(self, obs: int, row: Distribution) -> "ObservationStrategy":
        rows = list(self.choice)
        rows[obs] = row
        return ObservationStrategy(tuple(rows))


REACH_AVOID = "reach-avoid-prob"
EXPECTED_COST = "expected-cost"


@dataclass(frozen=True)
class Spec:
    """Reach-avoid requirement: hit `goal` while avoiding `bad`.

    For kind REACH_AVOID the threshold is a minimum probability; for kind
    EXPECTED_COST it is a maximum conditional expected step count.
    """

    kind: str
    bad: frozenset
    goal: frozenset
    threshold: float

    def __post_init__(self):
        if self.kind not in (REACH_AVOID, EXPECTED_COST):
            raise InvalidSpec(f"unknown spec kind {self.kind!r}")
        if self.bad & self.goal:
            raise InvalidSpec("bad and goal sets overlap")
        if self.kind == REACH_AVOID and not (0.0 <= self.threshold <= 1.0):
            raise InvalidSpec(f"probability threshold {self.threshold} outside [0,1]")
        if self.kind == EXPECTED_COST and self.threshold < 0.0:
            raise InvalidSpec(f"cost threshold {self.threshold} negative")


# --- operations -------------------------------------------------------------


def induce_mc(pomdp: Pomdp, strategy: ObservationStrategy) -> Mc:
    """Collapse the POMDP under an observation-based strategy.

    Row s of the result is the strategy-weighted mixture of the action rows
    of s, with the strategy read at the observation of s. All states are
    retained; no reachability pruning happens at this layer.
    """
    mdp = pomdp.mdp
    rows = []
    for s in range(mdp.num_states):
        z = pomdp.obs_map[s]
        if not (0 <= z < len(strategy.choice)):
            raise StrategyIncomplete(f"strategy missing observation {z}")
        action_row = mdp.transitions[s]
        acc: dict = {}
        for a, pa in strategy.choice[z]:
            if a not in action_row:
                raise IllegalSupport(
                    f"action {a} chosen at observation {z} is not enabled in state {s}"
                )
            for t, pt in action_row[a]:
                acc[t] = acc.get(t, 0.0) + pa * pt
        rows.append(Distribution(acc))
    return Mc(states=mdp.states, initial=mdp.initial, transitions=tuple(rows))


def observation_prior(pomdp: Pomdp, obs: int) -> Distribution:
    """Maximum-entropy state estimate for an observation: uniform over its
    preimage."""
    if not (0 <= obs < pomdp.num_observations):
        raise UnknownObservation(f"observation {obs} out of range")
    pre = pomdp.preimage(obs)
    if not pre:
        raise UnknownObservation(f"observation {obs} labels no state")
    return Distribution.uniform(pre)


# --- validation -------------------------------------------------------------


@dataclass(frozen=True)
class RowSumViolation:
    state: int
    action: Union[int, None]
    total: float


@dataclass(frozen=True)
class NegativeProbabilityViolation:
    state: int
    action: Union[int, None]
    outcome: Any
    prob: float


@dataclass(frozen=True)
class DeadlockViolation:
    state: int


@dataclass(frozen=True)
class TargetRangeViolation:
    state: int
    action: Union[int, None]
    outcome: Any


@dataclass(frozen=True)
class ObservationConsistencyViolation:
    state_a: int
    state_b: int


@dataclass(frozen=True)
class EmptyObservationViolation:
    obs: int


@dataclass(frozen=True)
class StrategyRowViolation:
    obs: int
    total: float


@dataclass(frozen=True)
class StrategySupportViolation:
    obs: int
    action: int


@dataclass(frozen=True)
class StrategyMissingViolation:
    obs: int


def _check_row(state, action, dist, num_states, out):
    total = 0.0
    for outcome, p in dist.entries:
        total += p
        if p < 0.0:
            out.append(NegativeProbabilityViolation(state, action, outcome, p))
        if not (isinstance(outcome, int) and 0 <= outcome < num_states):
            out.append(TargetRangeViolation(state, action, outcome))
    if abs(total - 1.0) > PROB_ATOL:
        out.append(RowSumViolation(state, action, total))


def validate(model) -> list:
    """Collect all invariant violations of a model; empty list means valid.

    Accepts Mdp, Mc, Pomdp and ObservationStrategy. Strategy support against
    a concrete POMDP is checked separately by strategy_violations().
    """
    out: list = []
    if isinstance(model, Pomdp):
        out.extend(validate(model.mdp))
        n = model.mdp.num_states
        seen: dict = {}
        for s in range(n):
            z = model.obs_map[s]
            if not (0 <= z < model.num_observations):
                out.append(EmptyObservationViolation(z))
                continue
            rep = seen.setdefault(z, s)
            if rep != s and model.mdp.enabled(rep) != model.mdp.enabled(s):
                out.append(ObservationConsistencyViolation(rep, s))
        for z in range(model.num_observations):
            if z not in seen:
                out.append(EmptyObservationViolation(z))
        return out
    if isinstance(model, Mdp):
        for s in range(model.num_states):
            row = model.transitions[s]
            if not row:
                out.append(DeadlockViolation(s))
            for a, dist in sorted(row.items()):
                _check_row(s, a, dist, model.num_states, out)
        return out
    if isinstance(model, Mc):
        for s in range(model.num_states):
            _check_row(s, None, model.transitions[s], model.num_states, out)
        return out
    if isinstance(model, ObservationStrategy):
        for z, dist in enumerate(model.choice):
            total = math.fsum(p for _, p in dist.entries)
            if abs(total - 1.0) > PROB_ATOL or any(p < 0 for _, p in dist.entries):
                out.append(StrategyRowViolation(z, total))
        return out
    raise TypeError(f"cannot validate {type(model).__name__}")


def strategy_violations(pomdp: Pomdp, strategy: ObservationStrategy) -> list:
    """Check a strategy against a POMDP: totality plus support inside the
    enabled actions of each observation."""
    out: list = []
    for z in range(pomdp.num_observations):
        if z >= len(strategy.choice):
            out.append(StrategyMissingViolation(z))
            continue
        pre = pomdp.preimage(z)
        if not pre:
            continue
        enabled = set(pomdp.mdp.enabled(pre[0]))
        for a in strategy.choice[z].support:
            if a not in enabled:
                out.append(StrategySupportViolation(z, a))
    out.extend(validate(strategy))
    return out
