"""Cooperative-perception coordination simulator for urban air mobility."""

from .engine import Engine, Event, EventKind, RunSummary, SchedulingError, substream
from .scenario import (ConfigError, ScenarioConfig, SensorSpec, RadioParams,
                       TriggerThresholds, load_config, config_from_dict,
                       preset_config)
from .simulation import RunResult, Simulation, run_simulation

__version__ = "0.1.0"

__all__ = [
    "Engine", "Event", "EventKind", "RunSummary", "SchedulingError", "substream",
    "ConfigError", "ScenarioConfig", "SensorSpec", "RadioParams",
    "TriggerThresholds", "load_config", "config_from_dict", "preset_config",
    "RunResult", "Simulation", "run_simulation",
    "__version__",
]
