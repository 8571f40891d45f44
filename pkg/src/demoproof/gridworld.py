"""Gridworld planning scenarios: one agent, one randomly moving obstacle,
static landmarks and a goal cell.

Coordinates are 0-based with (0, 0) the bottom-left cell; `width` and
`height` count cells. The agent sees only the eight neighbor cells as a bit
vector; a bit is set when the cell holds the obstacle or a landmark, or lies
outside the grid. Bit order (1-based) is: 1 down-left, 2 left, 3 up-left,
4 up, 5 up-right, 6 right, 7 down-right, 8 down.

Composed dynamics: the agent moves first (moving into a wall is a
self-transition; landmarks do not block the agent), then the obstacle takes
a uniformly random step among its in-grid non-landmark neighbors. A crash —
agent sharing a cell with the obstacle or standing on a landmark — is
checked after both moves and takes precedence over reaching the goal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Tuple, Union

from demoproof.models import Distribution, Mdp, ModelError, Pomdp, Spec, REACH_AVOID, EXPECTED_COST
from demoproof.util import derive_seed

Position = Tuple[int, int]

ACTIONS: Tuple[str, ...] = ("left", "right", "up", "down")
ACTION_VECTORS: Dict[str, Tuple[int, int]] = {
    "left": (-1, 0),
    "right": (1, 0),
    "up": (0, 1),
    "down": (0, -1),
}
# observation bit watched before stepping in a given direction (0-based index)
ACTION_BIT: Dict[str, int] = {"left": 1, "right": 5, "up": 3, "down": 7}

RANDOM_START = "random"
CRASH_OBS = "crash"

EVENT_NONE = "none"
EVENT_CRASH = "crash"
EVENT_GOAL = "goal"


class InvalidScenario(ModelError):
    pass


class InvalidRanges(ModelError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """One concrete scenario of the family.

    `freeze_obstacle` is a test hook that pins the obstacle in place, turning
    the model into a deterministic-agent MDP.
    """

    width: int
    height: int
    landmarks: FrozenSet[Position]
    obstacle_start: Position
    goal: Position
    agent_start: Union[Position, str]
    rng_seed: int = 0
    visibility: int = 1
    freeze_obstacle: bool = False

    def __post_init__(self):
        if self.width < 3 or self.height < 3:
            raise InvalidScenario("grid must be at least 3x3")
        if self.visibility != 1:
            raise InvalidScenario("only visibility distance 1 is supported")
        for pos in [*self.landmarks, self.obstacle_start, self.goal]:
            if not self.in_grid(pos):
                raise InvalidScenario(f"position {pos} outside the grid")
        if self.goal in self.landmarks:
            raise InvalidScenario("goal lies on a landmark")
        if self.obstacle_start == self.goal:
            raise InvalidScenario("obstacle starts on the goal")
        if self.agent_start != RANDOM_START:
            start = self.agent_start
            if not (isinstance(start, tuple) and self.in_grid(start)):
                raise InvalidScenario(f"agent start {start!r} outside the grid")
            if start in self.landmarks:
                raise InvalidScenario("agent starts on a landmark")
            if start == self.obstacle_start:
                raise InvalidScenario("agent starts on the obstacle")

    def in_grid(self, pos: Position) -> bool:
        return 0 <= pos[0] < self.width and 0 <= pos[1] < self.height

    def positions(self) -> List[Position]:
        return [(x, y) for y in range(self.height) for x in range(self.width)]

    def free_positions(self) -> List[Position]:
        """Cells where the agent may legally start."""
        return [p for p in self.positions()
                if p not in self.landmarks and p != self.obstacle_start]

    def to_obj(self) -> dict:
        obj = {
            "v": 1,
            "width": self.width,
            "height": self.height,
            "landmarks": sorted(list(p) for p in self.landmarks),
            "obstacle_start": list(self.obstacle_start),
            "goal": list(self.goal),
            "agent_start": (RANDOM_START if self.agent_start == RANDOM_START
                            else list(self.agent_start)),
            "rng_seed": self.rng_seed,
        }
        if self.freeze_obstacle:
            obj["freeze_obstacle"] = True
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "ScenarioConfig":
        start = obj["agent_start"]
        return cls(
            width=int(obj["width"]),
            height=int(obj["height"]),
            landmarks=frozenset(tuple(p) for p in obj["landmarks"]),
            obstacle_start=tuple(obj["obstacle_start"]),
            goal=tuple(obj["goal"]),
            agent_start=RANDOM_START if start == RANDOM_START else tuple(start),
            rng_seed=int(obj.get("rng_seed", 0)),
            freeze_obstacle=bool(obj.get("freeze_obstacle", False)),
        )


def save_scenario(path, config: ScenarioConfig) -> None:
    Path(path).write_text(
        json.dumps(config.to_obj(), sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8")


def load_scenario(path) -> ScenarioConfig:
    return ScenarioConfig.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class GridState:
    agent: Position
    obstacle: Position


@dataclass(frozen=True)
class ObsVector:
    """Neighborhood occupancy bits; width-parametric, 8 bits at visibility 1."""

    bits: Tuple[int, ...]

    def as_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    @property
    def code(self) -> int:
        return sum(b << i for i, b in enumerate(self.bits))

    @classmethod
    def from_string(cls, text: str) -> "ObsVector":
        return cls(tuple(1 if c == "1" else 0 for c in text))

    @classmethod
    def from_code(cls, code: int, width: int = 8) -> "ObsVector":
        return cls(tuple((code >> i) & 1 for i in range(width)))

    def count(self) -> int:
        return sum(self.bits)


# neighbor offsets in bit order 1..8
_NEIGHBOR_OFFSETS: Tuple[Tuple[int, int], ...] = (
    (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1),
)


def static_bits(agent: Position, config: ScenarioConfig) -> ObsVector:
    """Observation the agent would make if the dynamic obstacle were absent."""
    x, y = agent
    bits = []
    for dx, dy in _NEIGHBOR_OFFSETS:
        cell = (x + dx, y + dy)
        bits.append(1 if (not config.in_grid(cell)) or cell in config.landmarks else 0)
    return ObsVector(tuple(bits))


def observe(state: GridState, config: ScenarioConfig) -> ObsVector:
    x, y = state.agent
    bits = []
    for dx, dy in _NEIGHBOR_OFFSETS:
        cell = (x + dx, y + dy)
        occupied = (not config.in_grid(cell)) or cell in config.landmarks \
            or cell == state.obstacle
        bits.append(1 if occupied else 0)
    return ObsVector(tuple(bits))


def move_agent(pos: Position, action: str, config: ScenarioConfig) -> Position:
    dx, dy = ACTION_VECTORS[action]
    target = (pos[0] + dx, pos[1] + dy)
    return target if config.in_grid(target) else pos


def obstacle_step(obstacle: Position, config: ScenarioConfig) -> Distribution:
    """Law of the dynamic obstacle: uniform over legal neighbor cells.

    Walls and landmarks block the obstacle; it stays in place only when no
    move is legal (or when frozen by the test hook).
    """
    if config.freeze_obstacle:
        return Distribution.dirac(obstacle)
    x, y = obstacle
    moves = [c for c in ((x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1))
             if config.in_grid(c) and c not in config.landmarks]
    if not moves:
        return Distribution.dirac(obstacle)
    return Distribution.uniform(moves)


def classify(state: GridState, config: ScenarioConfig) -> str:
    if state.agent == state.obstacle or state.agent in config.landmarks:
        return EVENT_CRASH
    if state.agent == config.goal:
        return EVENT_GOAL
    return EVENT_NONE


def simulate_step(state: GridState, action: str, config: ScenarioConfig, rng):
    """One live step: move the agent, sample the obstacle, classify the result.

    Randomness comes only from the supplied generator, so runs are replayable
    from a stored seed and action sequence.
    """
    agent = move_agent(state.agent, action, config)
    obstacle = obstacle_step(state.obstacle, config).sample(rng)
    nxt = GridState(agent=agent, obstacle=obstacle)
    return nxt, classify(nxt, config)


@dataclass(frozen=True)
class ScenarioModel:
    """POMDP build product for one scenario: model, labels, and the id <->
    GridState correspondence used by simulation and refinement."""

    config: ScenarioConfig
    pomdp: Pomdp
    bad: FrozenSet[int]
    goal: FrozenSet[int]
    grid_states: Tuple[Optional[GridState], ...]
    sink: int

    @property
    def num_states(self) -> int:
        return self.pomdp.mdp.num_states

    def state_id(self, state: GridState) -> int:
        pos = self.config.width * self.config.height
        a = state.agent[1] * self.config.width + state.agent[0]
        o = state.obstacle[1] * self.config.width + state.obstacle[0]
        return a * pos + o

    def obs_string(self, state_id: int) -> str:
        return self.pomdp.observations[self.pomdp.obs_map[state_id]]

    def reach_spec(self, threshold: float) -> Spec:
        return Spec(kind=REACH_AVOID, bad=self.bad, goal=self.goal, threshold=threshold)

    def cost_spec(self, threshold: float) -> Spec:
        return Spec(kind=EXPECTED_COST, bad=self.bad, goal=self.goal, threshold=threshold)


def build_pomdp(config: ScenarioConfig, agent_start: Optional[Position] = None) -> ScenarioModel:
    """Compose agent and obstacle dynamics into an explicit POMDP.

    The state space is every (agent, obstacle) pair plus one absorbing crash
    sink. Goal states (agent on the goal, not crashed) self-loop; crashed
    states drain into the sink. All four actions are enabled everywhere,
    which keeps the enabled-action sets constant across observations.
    """
    if agent_start is None:
        if config.agent_start == RANDOM_START:
            raise InvalidScenario(
                "agent_start is random; build one POMDP per start cell")
        agent_start = config.agent_start  # type: ignore[assignment]
    else:
        if agent_start not in config.free_positions():
            raise InvalidScenario(f"agent start {agent_start} not a free cell")

    positions = config.positions()
    num_pos = len(positions)
    pos_index = {p: i for i, p in enumerate(positions)}
    sink = num_pos * num_pos
    num_states = sink + 1

    grid_states: List[Optional[GridState]] = [None] * num_states
    names: List[str] = [""] * num_states
    obs_strings: List[str] = [""] * num_states
    bad: set = set()
    goal: set = set()

    obstacle_rows = {p: obstacle_step(p, config) for p in positions}

    for a_pos in positions:
        for o_pos in positions:
            sid = pos_index[a_pos] * num_pos + pos_index[o_pos]
            state = GridState(agent=a_pos, obstacle=o_pos)
            grid_states[sid] = state
            names[sid] = f"a{a_pos[0]},{a_pos[1]}|o{o_pos[0]},{o_pos[1]}"
            obs_strings[sid] = observe(state, config).as_string()
            kind = classify(state, config)
            if kind == EVENT_CRASH:
                bad.add(sid)
            elif kind == EVENT_GOAL:
                goal.add(sid)
    names[sink] = "crash-sink"
    obs_strings[sink] = CRASH_OBS
    bad.add(sink)

    observations = tuple(sorted(set(obs_strings)))
    obs_index = {o: i for i, o in enumerate(observations)}
    obs_map = tuple(obs_index[o] for o in obs_strings)

    rows: List[Dict[int, Distribution]] = []
    num_actions = len(ACTIONS)
    for sid in range(num_states):
        if sid == sink or sid in bad:
            rows.append({a: Distribution.dirac(sink) for a in range(num_actions)})
            continue
        if sid in goal:
            rows.append({a: Distribution.dirac(sid) for a in range(num_actions)})
            continue
        state = grid_states[sid]
        assert state is not None
        row: Dict[int, Distribution] = {}
        o_row = obstacle_rows[state.obstacle]
        for a, action in enumerate(ACTIONS):
            a_next = pos_index[move_agent(state.agent, action, config)] * num_pos
            row[a] = Distribution({a_next + pos_index[o2]: p for o2, p in o_row})
        rows.append(row)

    start_id = pos_index[agent_start] * num_pos + pos_index[config.obstacle_start]
    mdp = Mdp(states=tuple(names), initial=start_id, actions=ACTIONS,
              transitions=tuple(rows))
    pomdp = Pomdp(mdp=mdp, observations=observations, obs_map=obs_map)
    return ScenarioModel(config=config, pomdp=pomdp, bad=frozenset(bad),
                         goal=frozenset(goal), grid_states=tuple(grid_states),
                         sink=sink)


@dataclass(frozen=True)
class ScenarioRanges:
    """Sampling ranges for random scenario generation (bounds inclusive)."""

    width: Tuple[int, int] = (4, 11)
    height: Tuple[int, int] = (4, 11)
    num_landmarks: Tuple[int, int] = (1, 1)
    random_start: bool = False

    def __post_init__(self):
        for lo, hi in (self.width, self.height, self.num_landmarks):
            if lo > hi:
                raise InvalidRanges(f"empty range ({lo}, {hi})")
        if self.width[0] < 3 or self.height[0] < 3:
            raise InvalidRanges("grids smaller than 3x3 are not supported")
        if self.num_landmarks[0] < 0:
            raise InvalidRanges("negative landmark count")


def random_scenario(rng, ranges: ScenarioRanges = ScenarioRanges()) -> ScenarioConfig:
    """Sample a config satisfying all scenario invariants (rejection sampling)."""
    for _ in range(1000):
        width = rng.randint(*ranges.width)
        height = rng.randint(*ranges.height)
        cells = [(x, y) for y in range(height) for x in range(width)]
        n_land = rng.randint(*ranges.num_landmarks)
        if n_land > len(cells) - 3:
            continue
        picked = rng.sample(cells, n_land + 2)
        landmarks = frozenset(picked[:n_land])
        goal = picked[n_land]
        obstacle = picked[n_land + 1]
        free = [c for c in cells if c not in landmarks and c != obstacle and c != goal]
        if not free:
            continue
        start: Union[Position, str]
        start = RANDOM_START if ranges.random_start else free[rng.randrange(len(free))]
        return ScenarioConfig(
            width=width, height=height, landmarks=landmarks,
            obstacle_start=obstacle, goal=goal, agent_start=start,
            rng_seed=derive_seed("scenario", rng.getrandbits(32)))
    raise InvalidRanges("could not satisfy scenario invariants within 1000 draws")
