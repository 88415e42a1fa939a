"""Per-generation summaries, cross-run aggregation and the Mann-Whitney U test."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, fields

import numpy as np


@dataclass(frozen=True)
class GenerationRecord:
    run_id: int
    generation: int
    best_energy: float
    mean_energy: float
    best_fitness: float
    mean_fitness: float
    total_food: int
    total_poison: int

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class RunAggregate:
    generations: np.ndarray
    best_energy_mean: np.ndarray
    best_energy_sd: np.ndarray
    mean_energy_mean: np.ndarray
    mean_energy_sd: np.ndarray
    run_ids: list[int]
    final_best_energy: np.ndarray  # one entry per run, ordered by run_id
    final_mean_energy: np.ndarray

    @property
    def n_runs(self) -> int:
        return len(self.run_ids)


def summarize_generation(energies, fitnesses, run_id: int = 0, generation: int = 0,
                         total_food: int | None = None,
                         total_poison: int | None = None) -> GenerationRecord:
    energies = np.asarray(energies, dtype=np.int64)
    fitnesses = np.asarray(fitnesses, dtype=np.int64)
    if energies.shape != fitnesses.shape or energies.ndim != 1 or energies.size == 0:
        raise ValueError(
            f"energies and fitnesses must be equal-length non-empty vectors "
            f"(got {energies.shape} and {fitnesses.shape})"
        )
    # fitness counts food; energy = food - poison
    food = int(fitnesses.sum()) if total_food is None else int(total_food)
    poison = food - int(energies.sum()) if total_poison is None else int(total_poison)
    return GenerationRecord(
        run_id=int(run_id),
        generation=int(generation),
        best_energy=float(energies.max()),
        mean_energy=float(energies.mean()),
        best_fitness=float(fitnesses.max()),
        mean_fitness=float(fitnesses.mean()),
        total_food=food,
        total_poison=poison,
    )


# ---------------------------------------------------------------------------
# Mann-Whitney U
# ---------------------------------------------------------------------------

EXACT_BELOW = 8


def midranks(values) -> np.ndarray:
    """1-based ranks with ties sharing the average of their positions."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v))
    sorted_v = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _u_statistic(ranks: np.ndarray, n_a: int) -> float:
    return float(ranks[:n_a].sum() - n_a * (n_a + 1) / 2.0)


def _exact_p(ranks: np.ndarray, n_a: int, u_obs: float) -> float:
    """Two-sided permutation p-value of U, counting subsets by doubled rank sum."""
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    total = int(doubled.sum())
    # counts[k][s]: number of size-k subsets whose doubled rank sum is s
    counts = np.zeros((n_a + 1, total + 1), dtype=object)
    counts[0, 0] = 1
    for r in doubled:
        for k in range(n_a, 0, -1):
            counts[k, r:] = counts[k, r:] + counts[k - 1, :total + 1 - r]
    dist = counts[n_a]
    offset = n_a * (n_a + 1)  # doubled n_a(n_a+1)/2
    n_b = len(ranks) - n_a
    centre2 = n_a * n_b  # doubled mean of U
    obs_dev = abs(2.0 * u_obs - centre2)
    hits = 0
    for s in np.flatnonzero(dist):
        if abs((s - offset) - centre2) >= obs_dev - 1e-9:
            hits += dist[s]
    return float(hits / math.comb(len(ranks), n_a))


def _normal_p(ranks: np.ndarray, n_a: int, n_b: int, u_obs: float) -> float:
    n = n_a + n_b
    _, counts = np.unique(ranks, return_counts=True)
    tie_term = float(((counts ** 3) - counts).sum()) / (n * (n - 1))
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return 1.0
    dev = max(abs(u_obs - n_a * n_b / 2.0) - 0.5, 0.0)  # continuity correction
    z = dev / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def rank_sum_test(a, b, exact: bool | None = None) -> tuple[float, float]:
    """Mann-Whitney U for sample ``a`` against ``b`` and its two-sided p-value.

    U counts pairs with a > b (ties count one half).  Samples smaller than 8
    get the exact permutation distribution; larger ones the tie-corrected
    normal approximation with continuity correction.  When every value in both
    samples is the same, p is 1.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("samples must be finite")
    n_a, n_b = a.size, b.size
    ranks = midranks(np.concatenate([a, b]))
    u = _u_statistic(ranks, n_a)
    if np.all(ranks == ranks[0]):
        return u, 1.0
    if exact is None:
        exact = min(n_a, n_b) < EXACT_BELOW
    if exact:
        if n_a <= n_b:
            return u, _exact_p(ranks, n_a, u)
        # same two-sided p, enumerated over the smaller sample
        swapped = np.concatenate([ranks[n_a:], ranks[:n_a]])
        return u, _exact_p(swapped, n_b, n_a * n_b - u)
    return u, _normal_p(ranks, n_a, n_b, u)


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def aggregate_runs(records) -> RunAggregate:
    """Cross-run mean and sample sd per generation (sd is 0 for a single run)."""
    by_run: dict[int, dict[int, GenerationRecord]] = defaultdict(dict)
    for r in records:
        if r.generation in by_run[r.run_id]:
            raise ValueError(f"duplicate record for run {r.run_id} generation {r.generation}")
        by_run[r.run_id][r.generation] = r
    if not by_run:
        raise ValueError("no records to aggregate")
    run_ids = sorted(by_run)
    grid = sorted(by_run[run_ids[0]])
    for rid in run_ids:
        if sorted(by_run[rid]) != grid:
            raise ValueError(f"run {rid} covers a different generation grid")

    best = np.array([[by_run[rid][g].best_energy for g in grid] for rid in run_ids])
    mean = np.array([[by_run[rid][g].mean_energy for g in grid] for rid in run_ids])
    ddof = 1 if len(run_ids) > 1 else 0
    return RunAggregate(
        generations=np.array(grid),
        best_energy_mean=best.mean(axis=0),
        best_energy_sd=best.std(axis=0, ddof=ddof),
        mean_energy_mean=mean.mean(axis=0),
        mean_energy_sd=mean.std(axis=0, ddof=ddof),
        run_ids=run_ids,
        final_best_energy=best[:, -1].copy(),
        final_mean_energy=mean[:, -1].copy(),
    )
