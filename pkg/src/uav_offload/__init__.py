"""Energy-optimal bit allocation for offloading to a UAV-mounted cloudlet.

A mobile device ships an application's input bits to a cloudlet riding a UAV,
the cloudlet processes them and returns the results, all over a slotted FDD
link while the UAV flies its trajectory. The package models the per-slot
energies, solves the convex program that minimizes the mobile's transmission
energy under the cloudlet's energy budget and the data-causality chains, and
ships brute-force and penalty-descent oracles to check the solver against.
"""

from .models import (
    BitAllocation,
    EnergyReport,
    comm_energy,
    comp_energy_slot,
    cpu_frequency,
    equal_allocation,
    evaluate,
    mobile_execution_energy,
    path_loss,
    slot_gains,
)
from .scenario import (
    Application,
    Channel,
    Devices,
    LinearTrajectory,
    Scenario,
    ScenarioFormatError,
    ScenarioValidationError,
    Timing,
    WaypointTrajectory,
    load_scenario,
    sample_positions,
    scenario_from_dict,
    validate,
)
from .solver import (
    DualState,
    KKTResiduals,
    Solution,
    SolveStatus,
    SolverConfig,
    optimize,
    solution_to_dict,
)

__version__ = "0.1.0"

__all__ = [
    "Application",
    "BitAllocation",
    "Channel",
    "Devices",
    "DualState",
    "EnergyReport",
    "KKTResiduals",
    "LinearTrajectory",
    "Scenario",
    "ScenarioFormatError",
    "ScenarioValidationError",
    "Solution",
    "SolveStatus",
    "SolverConfig",
    "Timing",
    "WaypointTrajectory",
    "__version__",
    "comm_energy",
    "comp_energy_slot",
    "cpu_frequency",
    "equal_allocation",
    "evaluate",
    "load_scenario",
    "mobile_execution_energy",
    "optimize",
    "path_loss",
    "sample_positions",
    "scenario_from_dict",
    "slot_gains",
    "solution_to_dict",
    "validate",
]
