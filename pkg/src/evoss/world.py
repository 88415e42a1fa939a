"""MiniWorld: a toroidal foraging arena with food and poison squares.

Screen coordinates throughout: x to the right, y downwards, headings in
degrees measured clockwise from +x.  World state is kept in flat arrays so the
simulation kernels can mutate it in place; ``AgentState`` and ``Substance``
are value snapshots for callers that want objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

FOOD = 0
POISON = 1

# Four colour codes; index // 2 gives the kind.
COLORS = np.array(
    [
        [1.0, 1.0, 1.0, 0.0],
        [1.0, 1.0, 0.0, 1.0],
        [0.0, 1.0, 1.0, 1.0],
        [1.0, 0.0, 1.0, 1.0],
    ]
)

# Arcs index the first three input bits.
LEFT, FRONT, RIGHT = 0, 1, 2
NO_INPUT = 12  # input code when nothing is sensed; others are arc * 4 + color


def _input_table() -> np.ndarray:
    table = np.zeros((13, 7))
    for arc in range(3):
        for color in range(4):
            code = arc * 4 + color
            table[code, arc] = 1.0
            table[code, 3:] = COLORS[color]
    return table


INPUTS = _input_table()

ACTIONS = ("left", "forward", "right", "reverse", "stop")
TURN_DEGREES = 20.0


class InvalidAction(ValueError):
    pass


class UndefinedDirection(ValueError):
    pass


@dataclass(frozen=True)
class MapSpec:
    id: str = "A"
    width: float = 640.0
    height: float = 640.0
    n_food: int = 30
    n_poison: int = 30
    n_agents: int = 20
    spawn_radius: float = 40.0
    sense_radius: float = 40.0
    body_size: float = 10.0
    agent_speed: float = 1.0

    def __post_init__(self):
        if self.id not in "ABCD" or len(self.id) != 1:
            raise ValueError(f"unknown map {self.id!r}; expected one of A, B, C, D")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("world dimensions must be positive")
        if min(self.n_food, self.n_poison, self.n_agents) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def agent_center(self) -> tuple[float, float]:
        w, h = self.width, self.height
        return {
            "A": (w / 4, h / 4),
            "B": (w / 4, 3 * h / 4),
            "C": (w / 4, h / 2),
            "D": (w / 2, h / 2),
        }[self.id]

    @property
    def food_region(self) -> tuple[float, float, float, float]:
        """(x_lo, x_hi, y_lo, y_hi), open on every side."""
        w, h = self.width, self.height
        return (5 * w / 8, 7 * w / 8, h / 8, 3 * h / 8)

    @property
    def poison_region(self) -> tuple[float, float, float, float]:
        w, h = self.width, self.height
        if self.id == "D":
            return (w / 8, 3 * w / 8, 5 * h / 8, 7 * h / 8)
        return (5 * w / 8, 7 * w / 8, 5 * h / 8, 7 * h / 8)

    def region(self, kind: int) -> tuple[float, float, float, float]:
        return self.food_region if kind == FOOD else self.poison_region

    def regions_array(self) -> np.ndarray:
        return np.array([self.food_region, self.poison_region], dtype=np.float64)


@dataclass(frozen=True)
class Substance:
    kind: int
    center: tuple[float, float]
    color: tuple[float, ...]
    half_size: float = 5.0

    @property
    def color_index(self) -> int:
        return _color_index(self.color)


@dataclass(frozen=True)
class AgentState:
    position: tuple[float, float]
    heading: float = 0.0
    speed: float = 1.0
    energy: int = 0
    food_eaten: int = 0
    poison_eaten: int = 0
    half_size: float = 5.0


@dataclass
class WorldState:
    map: MapSpec
    agent_pos: np.ndarray  # (n_agents, 2)
    heading: np.ndarray  # (n_agents,)
    food_eaten: np.ndarray  # (n_agents,) int64
    poison_eaten: np.ndarray  # (n_agents,) int64
    sub_pos: np.ndarray  # (n_substances, 2)
    sub_color: np.ndarray  # (n_substances,) int64 index into COLORS
    timestep: int = 0

    @property
    def energy(self) -> np.ndarray:
        return self.food_eaten - self.poison_eaten

    @property
    def agents(self) -> list[AgentState]:
        return [self.agent(i) for i in range(len(self.heading))]

    def agent(self, i: int) -> AgentState:
        return AgentState(
            position=(float(self.agent_pos[i, 0]), float(self.agent_pos[i, 1])),
            heading=float(self.heading[i]),
            speed=self.map.agent_speed,
            energy=int(self.food_eaten[i] - self.poison_eaten[i]),
            food_eaten=int(self.food_eaten[i]),
            poison_eaten=int(self.poison_eaten[i]),
            half_size=self.map.body_size / 2,
        )

    @property
    def substances(self) -> list[Substance]:
        return [
            Substance(
                kind=int(c) // 2,
                center=(float(p[0]), float(p[1])),
                color=tuple(COLORS[c]),
                half_size=self.map.body_size / 2,
            )
            for p, c in zip(self.sub_pos, self.sub_color)
        ]

    def copy(self) -> "WorldState":
        return WorldState(
            self.map,
            self.agent_pos.copy(),
            self.heading.copy(),
            self.food_eaten.copy(),
            self.poison_eaten.copy(),
            self.sub_pos.copy(),
            self.sub_color.copy(),
            self.timestep,
        )

    @classmethod
    def build(cls, map: MapSpec, agents, substances, timestep: int = 0) -> "WorldState":
        """Assemble a world from explicit agent and substance objects."""
        agents = list(agents)
        substances = list(substances)
        return cls(
            map,
            np.array([a.position for a in agents], dtype=np.float64).reshape(-1, 2),
            np.array([a.heading for a in agents], dtype=np.float64),
            np.array([a.food_eaten for a in agents], dtype=np.int64),
            np.array([a.poison_eaten for a in agents], dtype=np.int64),
            np.array([s.center for s in substances], dtype=np.float64).reshape(-1, 2),
            np.array([s.color_index for s in substances], dtype=np.int64),
            timestep,
        )


def _color_index(color) -> int:
    c = np.asarray(color, dtype=np.float64)
    for i, code in enumerate(COLORS):
        if np.array_equal(code, c):
            return i
    raise ValueError(f"not a substance colour code: {list(color)}")


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _wrap(v, size):
    r = v % size
    if r >= size:  # tiny negatives round up to size
        r -= size
    return r


@njit(cache=True)
def _delta(a, b, size):
    d = b - a
    half = size / 2.0
    if d > half:
        d -= size
    elif d <= -half:
        d += size
    return d


@njit(cache=True)
def _bearing(dx, dy, heading):
    theta = math.degrees(math.atan2(dy, dx)) - heading
    theta = theta % 360.0
    if theta >= 360.0:
        theta -= 360.0
    return theta


@njit(cache=True)
def _arc(theta):
    if 15.0 < theta < 45.0:
        return RIGHT
    if theta < 15.0 or theta > 345.0:
        return FRONT
    if 315.0 < theta < 345.0:
        return LEFT
    return -1


@njit(cache=True)
def _sense(x, y, heading, sub_pos, w, h, radius):
    """Return (arc, substance index) of the nearest visible substance or (-1, -1)."""
    r2 = radius * radius
    best = -1
    best_arc = -1
    best_d2 = 0.0
    for s in range(sub_pos.shape[0]):
        dx = _delta(x, sub_pos[s, 0], w)
        if dx > radius or dx < -radius:
            continue
        dy = _delta(y, sub_pos[s, 1], h)
        d2 = dx * dx + dy * dy
        if d2 > r2:
            continue
        if best >= 0 and d2 >= best_d2:
            continue
        if d2 == 0.0:
            arc = FRONT
        else:
            arc = _arc(_bearing(dx, dy, heading))
        if arc < 0:
            continue
        best = s
        best_arc = arc
        best_d2 = d2
    return best_arc, best


@njit(cache=True)
def _move(x, y, heading, action, speed, w, h):
    if action == 4:
        return x, y, heading
    dist = speed
    if action == 0:
        heading -= TURN_DEGREES
    elif action == 1:
        dist = 2.0 * speed
    elif action == 2:
        heading += TURN_DEGREES
    else:
        heading += 180.0
    heading = heading % 360.0
    if heading >= 360.0:
        heading -= 360.0
    rad = math.radians(heading)
    x = _wrap(x + dist * math.cos(rad), w)
    y = _wrap(y + dist * math.sin(rad), h)
    return x, y, heading


@njit(cache=True)
def _place(sub_pos, sub_color, s, kind, regions, buf, pos):
    """Respawn substance ``s`` of ``kind`` from three uniforms in ``buf``."""
    sub_pos[s, 0] = regions[kind, 0] + buf[pos] * (regions[kind, 1] - regions[kind, 0])
    sub_pos[s, 1] = regions[kind, 2] + buf[pos + 1] * (regions[kind, 3] - regions[kind, 2])
    sub_color[s] = 2 * kind + (1 if buf[pos + 2] >= 0.5 else 0)
    return pos + 3


@njit(cache=True)
def _eat(x, y, sub_pos, sub_color, body, w, h, regions, buf, pos):
    """Eat every substance overlapping the agent; returns (food, poison, buf_pos)."""
    food = 0
    poison = 0
    for s in range(sub_pos.shape[0]):
        dx = _delta(x, sub_pos[s, 0], w)
        if not (-body < dx < body):
            continue
        dy = _delta(y, sub_pos[s, 1], h)
        if not (-body < dy < body):
            continue
        kind = sub_color[s] // 2
        if kind == FOOD:
            food += 1
        else:
            poison += 1
        pos = _place(sub_pos, sub_color, s, kind, regions, buf, pos)
    return food, poison, pos


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def wrap_position(p, map: MapSpec) -> tuple[float, float]:
    return float(_wrap(float(p[0]), map.width)), float(_wrap(float(p[1]), map.height))


def toroidal_delta(src, dst, map: MapSpec) -> tuple[float, float]:
    """Shortest signed displacement from ``src`` to ``dst``; half-way ties go positive."""
    return (
        float(_delta(float(src[0]), float(dst[0]), map.width)),
        float(_delta(float(src[1]), float(dst[1]), map.height)),
    )


def relative_bearing(agent: AgentState, target, map: MapSpec) -> float:
    """Clockwise angle in [0, 360) from the agent's heading to ``target``."""
    dx, dy = toroidal_delta(agent.position, target, map)
    if dx == 0.0 and dy == 0.0:
        raise UndefinedDirection("target coincides with the agent position")
    return float(_bearing(dx, dy, float(agent.heading)))


def arc_of(theta: float) -> int | None:
    arc = int(_arc(float(theta)))
    return None if arc < 0 else arc


def input_code(arc: int, color_index: int) -> int:
    return NO_INPUT if arc < 0 else arc * 4 + color_index


def sense_index(world: WorldState, agent: AgentState) -> tuple[int, int]:
    """(arc, substance index) of what the agent sees, (-1, -1) for nothing."""
    arc, s = _sense(
        float(agent.position[0]),
        float(agent.position[1]),
        float(agent.heading),
        world.sub_pos,
        world.map.width,
        world.map.height,
        world.map.sense_radius,
    )
    return int(arc), int(s)


def sense(world: WorldState, agent: AgentState) -> np.ndarray:
    """The agent's 7-bit input: left/front/right presence then colour code."""
    arc, s = sense_index(world, agent)
    if s < 0:
        return INPUTS[NO_INPUT].copy()
    return INPUTS[input_code(arc, int(world.sub_color[s]))].copy()


def apply_action(agent: AgentState, action: int, map: MapSpec) -> AgentState:
    if not isinstance(action, (int, np.integer)) or not 0 <= action <= 4:
        raise InvalidAction(f"action must be an integer in 0..4, got {action!r}")
    x, y, heading = _move(
        float(agent.position[0]),
        float(agent.position[1]),
        float(agent.heading),
        int(action),
        float(agent.speed),
        map.width,
        map.height,
    )
    return replace(agent, position=(float(x), float(y)), heading=float(heading))


def spawn_substance(kind: int, map: MapSpec, rng: np.random.Generator) -> Substance:
    """New substance uniformly inside its kind's region with one of its two colours."""
    if kind not in (FOOD, POISON):
        raise ValueError(f"unknown substance kind {kind!r}")
    pos = np.zeros((1, 2))
    color = np.zeros(1, dtype=np.int64)
    _place(pos, color, 0, kind, map.regions_array(), rng.random(3), 0)
    return Substance(
        kind=kind,
        center=(float(pos[0, 0]), float(pos[0, 1])),
        color=tuple(COLORS[color[0]]),
        half_size=map.body_size / 2,
    )


def check_eat(world: WorldState, agent_index: int, rng: np.random.Generator) -> tuple[int, dict]:
    """Resolve collisions for one agent in place; returns (energy delta, events)."""
    if not 0 <= agent_index < len(world.heading):
        raise IndexError(f"agent index {agent_index} out of range")
    m = world.map
    dx = world.sub_pos[:, 0] - world.agent_pos[agent_index, 0]
    dy = world.sub_pos[:, 1] - world.agent_pos[agent_index, 1]
    dx = (dx + m.width / 2) % m.width - m.width / 2
    dy = (dy + m.height / 2) % m.height - m.height / 2
    eaten = [int(s) for s in np.flatnonzero((np.abs(dx) < m.body_size) & (np.abs(dy) < m.body_size))]
    buf = rng.random(3 * len(world.sub_color))
    food, poison, _ = _eat(
        world.agent_pos[agent_index, 0],
        world.agent_pos[agent_index, 1],
        world.sub_pos,
        world.sub_color,
        m.body_size,
        m.width,
        m.height,
        m.regions_array(),
        buf,
        0,
    )
    world.food_eaten[agent_index] += food
    world.poison_eaten[agent_index] += poison
    return int(food - poison), {"food": int(food), "poison": int(poison), "eaten": eaten}


def init_world(map: MapSpec, rng: np.random.Generator) -> WorldState:
    """Agents in a radius-40 disc around the map's spawn point, heading 0;
    food first, then poison, spread over their regions."""
    n = map.n_agents
    r = map.spawn_radius * np.sqrt(rng.random(n))
    phi = 2.0 * np.pi * rng.random(n)
    cx, cy = map.agent_center
    agent_pos = np.empty((n, 2))
    for i in range(n):
        agent_pos[i] = wrap_position((cx + r[i] * np.cos(phi[i]), cy + r[i] * np.sin(phi[i])), map)

    n_sub = map.n_food + map.n_poison
    sub_pos = np.zeros((n_sub, 2))
    sub_color = np.zeros(n_sub, dtype=np.int64)
    buf = rng.random(3 * n_sub)
    regions = map.regions_array()
    pos = 0
    for s in range(n_sub):
        kind = FOOD if s < map.n_food else POISON
        pos = _place(sub_pos, sub_color, s, kind, regions, buf, pos)

    return WorldState(
        map=map,
        agent_pos=agent_pos,
        heading=np.zeros(n),
        food_eaten=np.zeros(n, dtype=np.int64),
        poison_eaten=np.zeros(n, dtype=np.int64),
        sub_pos=sub_pos,
        sub_color=sub_color,
        timestep=0,
    )
