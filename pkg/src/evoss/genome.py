"""Genomes and the evolutionary operators acting on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neuro import N_PARAMS, LayerNet, bias_mask

MUTATION_RATE = 0.05
MUTATION_STEP = 0.05
GENOME_LENGTH = 2 * N_PARAMS

_BIAS = np.concatenate([bias_mask(), bias_mask()])


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Genome:
    """Innate weights of both network modules.

    The arrays are read-only: lifetime learning works on copies, so nothing
    learned can leak back into what gets inherited.
    """

    action_weights: np.ndarray
    reinforcement_weights: np.ndarray

    def __post_init__(self):
        a = _frozen(self.action_weights)
        r = _frozen(self.reinforcement_weights)
        if a.shape != (N_PARAMS,) or r.shape != (N_PARAMS,):
            raise ValueError(f"genome vectors must have length {N_PARAMS}")
        if not (np.isfinite(a).all() and np.isfinite(r).all()):
            raise ValueError("genome weights must be finite")
        object.__setattr__(self, "action_weights", a)
        object.__setattr__(self, "reinforcement_weights", r)

    @classmethod
    def from_flat(cls, values) -> "Genome":
        v = np.asarray(values, dtype=np.float64)
        if v.shape != (GENOME_LENGTH,):
            raise ValueError(f"expected {GENOME_LENGTH} values, got shape {v.shape}")
        return cls(v[:N_PARAMS], v[N_PARAMS:])

    def flat(self) -> np.ndarray:
        return np.concatenate([self.action_weights, self.reinforcement_weights])

    def action_net(self) -> LayerNet:
        return LayerNet.from_flat(self.action_weights)

    def reinforcement_net(self) -> LayerNet:
        return LayerNet.from_flat(self.reinforcement_weights)

    def __eq__(self, other):
        if not isinstance(other, Genome):
            return NotImplemented
        return bool(np.array_equal(self.flat(), other.flat()))

    __hash__ = None


@dataclass(frozen=True)
class ScoredGenome:
    genome: Genome
    fitness: int  # food eaten
    energy: int  # food - poison

    def __post_init__(self):
        if self.fitness < 0:
            raise ValueError("fitness must be non-negative")
        if self.energy > self.fitness:
            raise ValueError("energy cannot exceed fitness")


def random_genome(rng: np.random.Generator, use_bias: bool = True) -> Genome:
    values = rng.standard_normal(GENOME_LENGTH)
    if not use_bias:
        values[_BIAS] = 0.0
    return Genome.from_flat(values)


def select_parents(population, rng: np.random.Generator) -> tuple[int, int]:
    """Two independent fitness-proportionate draws (the same index may repeat).

    Falls back to uniform choice when nobody ate anything.
    """
    if not population:
        raise ValueError("population must be non-empty")
    fitness = np.array([s.fitness for s in population], dtype=np.float64)
    total = fitness.sum()
    u = rng.random(2)
    if total <= 0:
        idx = np.minimum((u * len(population)).astype(np.int64), len(population) - 1)
    else:
        idx = np.searchsorted(np.cumsum(fitness), u * total, side="right")
        idx = np.minimum(idx, len(population) - 1)
    return int(idx[0]), int(idx[1])


def crossover_ratio(f1: float, f2: float) -> float:
    total = f1 + f2
    return 0.5 if total <= 0 else f1 / total


def crossover(p1: ScoredGenome, p2: ScoredGenome, rng: np.random.Generator) -> Genome:
    """Per-weight uniform crossover biased towards the fitter parent."""
    ratio = crossover_ratio(p1.fitness, p2.fitness)
    take_first = rng.random(GENOME_LENGTH) < ratio
    return Genome.from_flat(np.where(take_first, p1.genome.flat(), p2.genome.flat()))


def mutate(g: Genome, rate: float = MUTATION_RATE, rng: np.random.Generator | None = None,
           use_bias: bool = True) -> Genome:
    """Add U(-0.05, 0.05) to each weight independently with probability ``rate``."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("mutation rate must lie in [0, 1]")
    if rng is None:
        raise ValueError("an rng stream is required")
    hit = rng.random(GENOME_LENGTH) < rate
    delta = rng.uniform(-MUTATION_STEP, MUTATION_STEP, GENOME_LENGTH)
    if not use_bias:
        hit &= ~_BIAS
    values = g.flat()
    return Genome.from_flat(np.where(hit, values + delta, values))


def next_generation(population, rng: np.random.Generator, mutation_rate: float = MUTATION_RATE,
                    use_bias: bool = True) -> list[Genome]:
    """Replace the whole population: select, cross over and mutate per child."""
    children = []
    for _ in range(len(population)):
        i, j = select_parents(population, rng)
        child = crossover(population[i], population[j], rng)
        children.append(mutate(child, mutation_rate, rng, use_bias))
    return children
