"""Periodic event-triggered cooperative output regulation of nonlinear
multi-agent systems with input delay."""
from .config import load_config, read_config
from .diagnostics import DiagnosticsConfig, decay_fit, trigger_stats
from .engine import Scenario, SimTrace, run
from .errors import (
    ConfigError,
    ContractViolation,
    HistoryFault,
    PetcorError,
    PredictionOverflow,
    SchedulingFault,
    SimulationFault,
    SolvabilityError,
    StructuralError,
)
from .exosys import Exosystem, expm, leader_state
from .observer import ObserverParams
from .petfilter import FilterParams
from .plant import FollowerPlant, make_disturbance, make_nonlinearity
from .predictor import ControllerConfig
from .report import emit_outputs, read_trace_csv
from .topology import CommGraph, max_sampling_bound

__version__ = "0.1.0"
