"""Control-plane toolkit for switched QKD networks.

Models links and configurations, enumerates useful configurations, computes
switching schedules (FMCB and MMAK), runs the switching coordinator against an
exact event-driven buffer simulation, and sweeps sustainable consumption rates.
"""

from qkdswitch.configspace import enumerate_configurations, reduce_useful, useful_configurations
from qkdswitch.coordinator import CoordinatorConfig, SwitchingCoordinator
from qkdswitch.model import (
    ActiveLink,
    Configuration,
    LinkSpec,
    LinkState,
    NetworkState,
    NetworkStructure,
    PhysicalLinkSpec,
    validate,
)
from qkdswitch.optimize import Schedule, build_matrices, compute_schedule, k_supported, mmak_solve
from qkdswitch.scenario import Scenario, load_scenario, parse_scenario
from qkdswitch.simenv import Simulation, Trace

__version__ = "0.1.0"

__all__ = [
    "ActiveLink",
    "Configuration",
    "CoordinatorConfig",
    "LinkSpec",
    "LinkState",
    "NetworkState",
    "NetworkStructure",
    "PhysicalLinkSpec",
    "Scenario",
    "Schedule",
    "Simulation",
    "SwitchingCoordinator",
    "Trace",
    "build_matrices",
    "compute_schedule",
    "enumerate_configurations",
    "k_supported",
    "load_scenario",
    "mmak_solve",
    "parse_scenario",
    "reduce_useful",
    "useful_configurations",
    "validate",
]
