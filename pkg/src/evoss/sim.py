"""Lifetimes, generations and whole experiments for the three regimes.

EVO     evolution only, networks fixed for life
EVO_SS  evolution of self-teaching agents (Darwinian: learning is not inherited)
SS      self-teaching agents re-drawn at random every generation
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from . import genome as gen
from .genome import Genome, ScoredGenome
from .metrics import GenerationRecord, summarize_generation
from .neuro import N_HID, N_OUT, N_PARAMS, LayerNet, _argmax, _forward, _self_teach
from .world import INPUTS, NO_INPUT, MapSpec, WorldState, _eat, _move, _sense, init_world


class Mode(str, enum.Enum):
    EVO = "EVO"
    EVO_SS = "EVO_SS"
    SS = "SS"

    @property
    def learns(self) -> bool:
        return self is not Mode.EVO

    @property
    def evolves(self) -> bool:
        return self is not Mode.SS

    @classmethod
    def parse(cls, text: str) -> "Mode":
        key = text.strip().upper().replace("-", "_").replace("+", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown mode {text!r}; expected evo, evo-ss or ss") from None


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RegimeConfig:
    mode: Mode = Mode.EVO_SS
    generations: int = 100
    steps_per_generation: int = 5000
    population: int = 20
    learning_rate: float = 0.01
    mutation_rate: float = 0.05
    map: str = "A"
    seed: int = 0
    use_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode) if isinstance(self.mode, str) else self.mode)
        self.validate()

    def validate(self):
        if self.generations <= 0:
            raise ConfigError("generations must be positive")
        if self.steps_per_generation < 0:
            raise ConfigError("steps_per_generation must be non-negative")
        if self.population <= 0:
            raise ConfigError("population must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigError("mutation_rate must lie in [0, 1]")
        if self.map not in ("A", "B", "C", "D"):
            raise ConfigError(f"unknown map {self.map!r}")

    def map_spec(self) -> MapSpec:
        return MapSpec(id=self.map, n_agents=self.population)


class Streams:
    """Independent named generators derived from one master seed."""

    NAMES = ("world", "respawn", "evolution", "genomes")

    def __init__(self, seed: int):
        self.seed = int(seed)
        for name in self.NAMES:
            key = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(key,))
            setattr(self, name, np.random.Generator(np.random.PCG64(ss)))


@dataclass
class ControllerPhenotype:
    action_net: LayerNet
    reinforcement_net: LayerNet

    @classmethod
    def from_genome(cls, g: Genome) -> "ControllerPhenotype":
        return cls(LayerNet.from_flat(g.action_weights), LayerNet.from_flat(g.reinforcement_weights))


# ---------------------------------------------------------------------------
# hot loop
# ---------------------------------------------------------------------------

# Worst case: every agent eats every substance in one step, 3 uniforms each.
def _reserve(n_agents: int, n_subs: int) -> int:
    return 3 * n_agents * n_subs


@njit(cache=True)
def _target_table(reinf_params, table):
    """Reinforcement outputs for all 13 possible inputs, per agent."""
    hidden = np.empty(N_HID)
    out = np.empty(N_OUT)
    for a in range(reinf_params.shape[0]):
        for code in range(INPUTS.shape[0]):
            _forward(reinf_params[a], INPUTS[code], hidden, out)
            for k in range(N_OUT):
                table[a, code, k] = out[k]


@njit(cache=True)
def _action_table(action_params, table):
    hidden = np.empty(N_HID)
    out = np.empty(N_OUT)
    for a in range(action_params.shape[0]):
        for code in range(INPUTS.shape[0]):
            _forward(action_params[a], INPUTS[code], hidden, out)
            table[a, code] = _argmax(out)


@njit(cache=True)
def _run_steps(n_steps, agent_pos, heading, food, poison, sub_pos, sub_color,
               action_params, targets, learn, lr, use_bias, use_table,
               speed, body, radius, w, h, regions, buf, bpos, reserve):
    """Advance up to ``n_steps`` timesteps in place.

    Stops early when fewer than ``reserve`` random numbers are left in ``buf``;
    returns (steps done, next unread position in ``buf``).
    """
    n_agents = agent_pos.shape[0]
    hidden = np.empty(N_HID)
    out = np.empty(N_OUT)
    d_hid = np.empty(N_HID)
    d_out = np.empty(N_OUT)
    table = np.zeros((n_agents, INPUTS.shape[0]), dtype=np.int64)
    if use_table:
        _action_table(action_params, table)
    t = 0
    while t < n_steps:
        if buf.shape[0] - bpos < reserve:
            break
        for i in range(n_agents):
            arc, s = _sense(agent_pos[i, 0], agent_pos[i, 1], heading[i], sub_pos, w, h, radius)
            code = NO_INPUT if s < 0 else arc * 4 + sub_color[s]
            x = INPUTS[code]
            if use_table:
                act = table[i, code]
            else:
                _forward(action_params[i], x, hidden, out)
                act = _argmax(out)
            nx, ny, nh = _move(agent_pos[i, 0], agent_pos[i, 1], heading[i], act, speed, w, h)
            agent_pos[i, 0] = nx
            agent_pos[i, 1] = ny
            heading[i] = nh
            f, p, bpos = _eat(nx, ny, sub_pos, sub_color, body, w, h, regions, buf, bpos)
            food[i] += f
            poison[i] += p
            if learn:
                _self_teach(action_params[i], x, hidden, out, targets[i, code], lr, use_bias,
                            d_out, d_hid)
        t += 1
    return t, bpos


class Lifetime:
    """Mutable simulation state for one generation: world plus working weights."""

    def __init__(self, world: WorldState, action_params: np.ndarray, reinforcement_params: np.ndarray,
                 mode: Mode, learning_rate: float = 0.01, use_bias: bool = True):
        self.world = world
        self.action_params = np.ascontiguousarray(action_params, dtype=np.float64)
        self.reinforcement_params = np.ascontiguousarray(reinforcement_params, dtype=np.float64)
        self.mode = Mode(mode)
        self.learning_rate = float(learning_rate)
        self.use_bias = bool(use_bias)
        n = len(world.heading)
        if self.action_params.shape != (n, N_PARAMS) or self.reinforcement_params.shape != (n, N_PARAMS):
            raise ValueError("one action and one reinforcement parameter row per agent required")
        self.targets = np.zeros((n, INPUTS.shape[0], N_OUT))
        if self.mode.learns:
            _target_table(self.reinforcement_params, self.targets)
        m = world.map
        self._regions = m.regions_array()
        self._reserve = _reserve(n, len(world.sub_color))
        self._buf = np.zeros(0)
        self._bpos = 0

    @classmethod
    def from_genomes(cls, world: WorldState, genomes, mode: Mode, learning_rate: float = 0.01,
                     use_bias: bool = True) -> "Lifetime":
        action = np.array([g.action_weights for g in genomes])
        reinf = np.array([g.reinforcement_weights for g in genomes])
        return cls(world, action, reinf, mode, learning_rate, use_bias)

    def phenotypes(self) -> list[ControllerPhenotype]:
        return [
            ControllerPhenotype(LayerNet.from_flat(a), LayerNet.from_flat(r))
            for a, r in zip(self.action_params, self.reinforcement_params)
        ]

    def run(self, n_steps: int, rng: np.random.Generator, use_table: bool | None = None) -> None:
        """Advance ``n_steps`` timesteps, drawing respawn positions from ``rng``."""
        if use_table is None:
            use_table = not self.mode.learns
        w = self.world
        m = w.map
        chunk = max(self._reserve * 8, 4096)
        done = 0
        while done < n_steps:
            if len(self._buf) - self._bpos < self._reserve:
                self._buf = np.concatenate([self._buf[self._bpos:], rng.random(chunk)])
                self._bpos = 0
            t, self._bpos = _run_steps(
                n_steps - done, w.agent_pos, w.heading, w.food_eaten, w.poison_eaten,
                w.sub_pos, w.sub_color, self.action_params, self.targets,
                self.mode.learns, self.learning_rate, self.use_bias, bool(use_table),
                m.agent_speed, m.body_size, m.sense_radius, m.width, m.height,
                self._regions, self._buf, self._bpos, self._reserve,
            )
            done += t
            w.timestep += t


def step(world: WorldState, phenotypes: list[ControllerPhenotype], mode: Mode,
         rng: np.random.Generator, learning_rate: float = 0.01,
         use_bias: bool = True) -> tuple[WorldState, list[ControllerPhenotype]]:
    """One timestep for every agent, in index order.  Arguments are not mutated."""
    life = Lifetime(
        world.copy(),
        np.array([p.action_net.flat() for p in phenotypes]),
        np.array([p.reinforcement_net.flat() for p in phenotypes]),
        Mode(mode),
        learning_rate,
        use_bias,
    )
    life.run(1, rng)
    return life.world, life.phenotypes()


# ---------------------------------------------------------------------------
# generations and experiments
# ---------------------------------------------------------------------------

def run_generation(genomes, config: RegimeConfig, streams: Streams, run_id: int = 0,
                   generation: int = 0,
                   on_lifetime: Callable[[Lifetime], None] | None = None,
                   ) -> tuple[list[ScoredGenome], GenerationRecord]:
    """Live one lifetime in a fresh world and score every genome.

    Learning acts on copies of the action weights; the genomes themselves are
    read-only and come back untouched.
    """
    genomes = list(genomes)
    if len(genomes) != config.population:
        raise ValueError(f"expected {config.population} genomes, got {len(genomes)}")
    world = init_world(config.map_spec(), streams.world)
    life = Lifetime.from_genomes(world, genomes, config.mode, config.learning_rate, config.use_bias)
    life.run(config.steps_per_generation, streams.respawn)
    if on_lifetime is not None:
        on_lifetime(life)
    fitness = world.food_eaten.copy()
    energy = world.energy
    scored = [ScoredGenome(g, int(f), int(e)) for g, f, e in zip(genomes, fitness, energy)]
    record = summarize_generation(
        energy, fitness, run_id=run_id, generation=generation,
        total_food=int(world.food_eaten.sum()), total_poison=int(world.poison_eaten.sum()),
    )
    return scored, record


def initial_genomes(config: RegimeConfig, streams: Streams) -> list[Genome]:
    return [gen.random_genome(streams.genomes, config.use_bias) for _ in range(config.population)]


def run_experiment(config: RegimeConfig, run_id: int = 0,
                   on_generation: Callable[[int, list[Genome], Lifetime], None] | None = None,
                   ) -> list[GenerationRecord]:
    """All generations of one run; returns one record per generation."""
    config.validate()
    streams = Streams(config.seed)
    genomes = initial_genomes(config, streams)
    records = []
    for g in range(config.generations):
        hook = None
        if on_generation is not None:
            hook = lambda life, g=g, genomes=genomes: on_generation(g, genomes, life)  # noqa: E731
        scored, record = run_generation(genomes, config, streams, run_id, g, hook)
        records.append(record)
        if g == config.generations - 1:
            break
        if config.mode.evolves:
            genomes = gen.next_generation(scored, streams.evolution, config.mutation_rate, config.use_bias)
        else:
            genomes = initial_genomes(config, streams)
    return records
