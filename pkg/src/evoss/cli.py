"""Command-line driver: sweep (mode, map, run) cells and write result files.

    evoss run --mode evo,evo-ss --map A --runs 30 --seed 7 --out results/
    evoss test-stats results/generations.csv:best_energy results/generations.csv:best_energy \
        --where-a mode=EVO --where-a generation=99 --where-b mode=EVO_SS --where-b generation=99

Settings come from built-in defaults, then a key=value config file
(``--config PATH``, or ``evoss.conf`` in the working directory), then flags.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .metrics import aggregate_runs, rank_sum_test
from .sim import Mode, RegimeConfig, run_experiment

DEFAULT_CONFIG = "evoss.conf"
MAPS = ("A", "B", "C", "D")
CSV_HEADER = [
    "mode", "map", "run", "generation", "best_energy", "mean_energy",
    "best_fitness", "mean_fitness", "total_food", "total_poison",
]
PLOT_HEADER = [
    "mode", "map", "generation", "runs", "best_energy_mean", "best_energy_sd",
    "mean_energy_mean", "mean_energy_sd",
]


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    modes: tuple[Mode, ...] = (Mode.EVO, Mode.EVO_SS, Mode.SS)
    maps: tuple[str, ...] = MAPS
    runs: int = 30
    base_seed: int = 0
    generations: int = 100
    steps: int = 5000
    learning_rate: float = 0.01
    mutation_rate: float = 0.05
    use_bias: bool = True
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)
    output_dir: Path = Path("results")
    format: str = "csv"

    def cells(self) -> list[tuple[Mode, str, int]]:
        return [(mode, m, r) for mode in self.modes for m in self.maps for r in range(self.runs)]

    def config_for(self, mode: Mode, map_id: str, run: int) -> RegimeConfig:
        return RegimeConfig(
            mode=mode,
            generations=self.generations,
            steps_per_generation=self.steps,
            learning_rate=self.learning_rate,
            mutation_rate=self.mutation_rate,
            map=map_id,
            seed=cell_seed(self.base_seed, mode, map_id, run),
            use_bias=self.use_bias,
        )

    def describe(self) -> dict:
        d = asdict(self)
        d["modes"] = [m.value for m in self.modes]
        d["maps"] = list(self.maps)
        d["output_dir"] = str(self.output_dir)
        del d["jobs"]  # results never depend on it
        return d


def cell_seed(base_seed: int, mode: Mode, map_id: str, run: int) -> int:
    """``base_seed`` XOR the first 63 bits of sha256("MODE|MAP|RUN")."""
    digest = hashlib.sha256(f"{Mode(mode).value}|{map_id}|{run}".encode()).digest()
    return int(base_seed) ^ (int.from_bytes(digest[:8], "big") >> 1)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _mode_list(text: str) -> tuple[Mode, ...]:
    items = [t for t in text.replace(" ", "").split(",") if t]
    if items == ["all"]:
        return tuple(Mode)
    try:
        modes = [Mode.parse(t) for t in items]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return tuple(m for m in Mode if m in modes)


def _map_list(text: str) -> tuple[str, ...]:
    items = [t.upper() for t in text.replace(" ", "").split(",") if t]
    if items == ["ALL"]:
        return MAPS
    bad = [t for t in items if t not in MAPS]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"unknown map {','.join(bad) or text!r}; expected A, B, C or D")
    return tuple(m for m in MAPS if m in items)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _non_negative_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _rate(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a rate in [0, 1], got {text}")
    return v


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# flag name -> (plan field, converter)
_OPTIONS = {
    "mode": ("modes", _mode_list),
    "map": ("maps", _map_list),
    "runs": ("runs", _positive_int),
    "generations": ("generations", _positive_int),
    "steps": ("steps", _non_negative_int),
    "seed": ("base_seed", int),
    "learning-rate": ("learning_rate", _positive_float),
    "mutation-rate": ("mutation_rate", _rate),
    "no-bias": ("use_bias", lambda t: not _bool(t)),
    "jobs": ("jobs", _positive_int),
    "out": ("output_dir", Path),
    "format": ("format", str),
}


def read_config(path: Path) -> dict:
    """Parse a flat key=value file into plan overrides."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in _OPTIONS:
            raise UsageError(f"{path}:{lineno}: unknown setting {key!r}")
        name, convert = _OPTIONS[key]
        try:
            values[name] = convert(value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
    if values.get("format", "csv") not in ("csv", "json"):
        raise UsageError(f"{path}: format must be csv or json")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evoss", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment sweep")
    S = argparse.SUPPRESS
    run.add_argument("--config", type=Path, default=None, help="key=value settings file")
    run.add_argument("--mode", dest="modes", type=_mode_list, default=S,
                     help="comma list of evo, evo-ss, ss (or all)")
    run.add_argument("--map", dest="maps", type=_map_list, default=S, help="comma list of A-D (or all)")
    run.add_argument("--runs", type=_positive_int, default=S)
    run.add_argument("--generations", type=_positive_int, default=S)
    run.add_argument("--steps", type=_non_negative_int, default=S)
    run.add_argument("--seed", dest="base_seed", type=int, default=S)
    run.add_argument("--learning-rate", type=_positive_float, default=S)
    run.add_argument("--mutation-rate", type=_rate, default=S)
    run.add_argument("--no-bias", dest="use_bias", action="store_false", default=S)
    run.add_argument("--jobs", type=_positive_int, default=S)
    run.add_argument("--out", dest="output_dir", type=Path, default=S)
    run.add_argument("--format", choices=("csv", "json"), default=S)

    stats = sub.add_parser("test-stats", help="Mann-Whitney U test on two CSV columns")
    stats.add_argument("sample_a", help="PATH:COLUMN")
    stats.add_argument("sample_b", help="PATH:COLUMN")
    stats.add_argument("--where-a", action="append", default=[], metavar="KEY=VALUE")
    stats.add_argument("--where-b", action="append", default=[], metavar="KEY=VALUE")
    return parser


def parse_args(argv=None) -> ExperimentPlan:
    """Build a plan for the ``run`` subcommand: defaults < config file < flags."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.command != "run":
        parser.error("parse_args builds plans for the 'run' subcommand only")
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    config_path = ns.config
    if config_path is None and Path(DEFAULT_CONFIG).is_file():
        config_path = Path(DEFAULT_CONFIG)
    settings = {}
    if config_path is not None:
        try:
            settings = read_config(config_path)
        except OSError as exc:
            parser.error(f"cannot read config {config_path}: {exc.strerror}")
        except UsageError as exc:
            parser.error(str(exc))
    settings.update(flags)
    return replace(ExperimentPlan(), **settings)


# ---------------------------------------------------------------------------
# execution and output
# ---------------------------------------------------------------------------

def _run_cell(args):
    plan, (mode, map_id, run) = args
    records = run_experiment(plan.config_for(mode, map_id, run), run_id=run)
    return (mode, map_id, run), records


def run_cells(plan: ExperimentPlan) -> dict:
    """Results keyed by (mode, map, run); independent of ``plan.jobs``."""
    cells = plan.cells()
    tasks = [(plan, c) for c in cells]
    if plan.jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            results = dict(pool.map(_run_cell, tasks))
    else:
        results = dict(map(_run_cell, tasks))
    return {c: results[c] for c in cells}


def _num(x: float):
    return int(x) if float(x).is_integer() else float(x)


def generations_rows(results: dict) -> list[list]:
    rows = []
    for (mode, map_id, run), records in results.items():
        for r in records:
            rows.append([
                mode.value, map_id, run, r.generation, _num(r.best_energy), _num(r.mean_energy),
                _num(r.best_fitness), _num(r.mean_fitness), r.total_food, r.total_poison,
            ])
    return rows


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return {"mean": float(v.mean()), "sd": sd, "values": [_num(x) for x in v]}


def build_outputs(plan: ExperimentPlan, results: dict) -> dict[str, str]:
    """File name -> text for every result file."""
    grouped: dict[tuple[Mode, str], list] = {}
    seeds: dict[tuple[Mode, str], list] = {}
    for (mode, map_id, run), records in results.items():
        grouped.setdefault((mode, map_id), []).extend(records)
        seeds.setdefault((mode, map_id), []).append(
            {"run": run, "seed": cell_seed(plan.base_seed, mode, map_id, run)}
        )
    aggregates = {key: aggregate_runs(recs) for key, recs in grouped.items()}

    plot_rows = []
    cells = []
    for (mode, map_id), agg in aggregates.items():
        for i, g in enumerate(agg.generations):
            plot_rows.append([
                mode.value, map_id, int(g), agg.n_runs,
                float(agg.best_energy_mean[i]), float(agg.best_energy_sd[i]),
                float(agg.mean_energy_mean[i]), float(agg.mean_energy_sd[i]),
            ])
        cells.append({
            "mode": mode.value,
            "map": map_id,
            "runs": seeds[(mode, map_id)],
            "final_generation": int(agg.generations[-1]),
            "final_best_energy": _stats(agg.final_best_energy),
            "final_mean_energy": _stats(agg.final_mean_energy),
        })

    comparisons = []
    for map_id in plan.maps:
        for a, b in itertools.combinations(plan.modes, 2):
            if (a, map_id) not in aggregates or (b, map_id) not in aggregates:
                continue
            entry = {"map": map_id, "mode_a": a.value, "mode_b": b.value}
            for metric in ("final_best_energy", "final_mean_energy"):
                u, p = rank_sum_test(getattr(aggregates[(a, map_id)], metric),
                                     getattr(aggregates[(b, map_id)], metric))
                entry[metric.removeprefix("final_")] = {"U": u, "p": p}
            comparisons.append(entry)

    summary = {"plan": plan.describe(), "cells": cells, "comparisons": comparisons}
    files = {
        "summary.json": json.dumps(summary, indent=2) + "\n",
        "plot_data.csv": _csv_text(PLOT_HEADER, plot_rows),
    }
    rows = generations_rows(results)
    if plan.format == "json":
        files["generations.json"] = json.dumps(
            [dict(zip(CSV_HEADER, row)) for row in rows], indent=1
        ) + "\n"
    else:
        files["generations.csv"] = _csv_text(CSV_HEADER, rows)
    return files


def write_outputs(out_dir: Path, files: dict[str, str]) -> None:
    """Write all files or none: stage in a temp dir, then move into place."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".evoss-", dir=out_dir))
    placed = []
    try:
        for name, text in files.items():
            with open(staging / name, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for name in files:
            os.replace(staging / name, out_dir / name)
            placed.append(out_dir / name)
    except BaseException:
        for p in placed:
            p.unlink(missing_ok=True)
        raise
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def execute_plan(plan: ExperimentPlan) -> int:
    results = run_cells(plan)
    files = build_outputs(plan, results)
    try:
        write_outputs(Path(plan.output_dir), files)
    except OSError as exc:
        print(f"evoss: error writing {exc.filename or plan.output_dir}: {exc.strerror}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# test-stats
# ---------------------------------------------------------------------------

def _parse_filters(items, parser) -> dict[str, str]:
    filters = {}
    for item in items:
        if "=" not in item:
            parser.error(f"filter {item!r} must look like KEY=VALUE")
        k, v = item.split("=", 1)
        filters[k.strip()] = v.strip()
    return filters


def read_column(spec: str, filters: dict[str, str]) -> list[float]:
    path, sep, column = spec.rpartition(":")
    if not sep or not path or not column:
        raise UsageError(f"sample {spec!r} must look like PATH:COLUMN")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fieldnames = reader.fieldnames or []
        missing = [c for c in [column, *filters] if c not in fieldnames]
        if missing:
            raise UsageError(f"{path}: no column(s) {', '.join(missing)}")
        return [float(row[column]) for row in reader
                if all(row[k] == v for k, v in filters.items())]


def _cmd_test_stats(ns, parser) -> int:
    try:
        a = read_column(ns.sample_a, _parse_filters(ns.where_a, parser))
        b = read_column(ns.sample_b, _parse_filters(ns.where_b, parser))
    except UsageError as exc:
        parser.error(str(exc))
    except OSError as exc:
        print(f"evoss: cannot read {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1
    if not a or not b:
        parser.error("both samples must select at least one row")
    u, p = rank_sum_test(a, b)
    print(json.dumps({"U": u, "p": p, "n_a": len(a), "n_b": len(b)}))
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.command == "test-stats":
        return _cmd_test_stats(ns, parser)
    return execute_plan(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
