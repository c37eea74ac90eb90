"""Simulated communities of value-driven conversational agents."""

__version__ = "0.1.0"

from .values import (
    CYCLE,
    HigherOrderCategory,
    ValueType,
    adjacent_pairs,
    category,
    circular_distance,
    is_compatible_pair,
)
from .persona import (
    Complexity,
    PersonaProfile,
    PersonaSpec,
    PopulationCondition,
    PopulationSpec,
    build_population_specs,
)
from .config import RunConfig, load_config
from .engine import SimulationEngine, replay_run, run_experiment

__all__ = [
    "__version__",
    "CYCLE",
    "HigherOrderCategory",
    "ValueType",
    "adjacent_pairs",
    "category",
    "circular_distance",
    "is_compatible_pair",
    "Complexity",
    "PersonaProfile",
    "PersonaSpec",
    "PopulationCondition",
    "PopulationSpec",
    "build_population_specs",
    "RunConfig",
    "load_config",
    "SimulationEngine",
    "replay_run",
    "run_experiment",
]
