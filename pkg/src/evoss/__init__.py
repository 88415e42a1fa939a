"""Evolving self-supervised neural controllers in a toroidal foraging world."""

from .genome import Genome, ScoredGenome
from .metrics import GenerationRecord, rank_sum_test
from .neuro import LayerNet
from .sim import Mode, RegimeConfig, run_experiment
from .world import MapSpec, WorldState

__all__ = [
    "Genome",
    "GenerationRecord",
    "LayerNet",
    "MapSpec",
    "Mode",
    "RegimeConfig",
    "ScoredGenome",
    "WorldState",
    "rank_sum_test",
    "run_experiment",
]

__version__ = "0.1.0"
