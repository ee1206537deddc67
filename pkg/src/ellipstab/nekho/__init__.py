"""Confinement constants, integration and the staged confinement algorithm."""
from .confine import ConfinementLog, StageRecord, run_confinement_algorithm, stage_conditions, step_conditions
from .constants import (NekhoConstants, Schedule, StabilityBound, SteepParams, choose_Q_m, compute_constants,
                        stability_time_bound, theorem_constants)
from .integrate import DriftReport, Trajectory, actions, integrate, measure_drift

__all__ = [
    "ConfinementLog", "StageRecord", "run_confinement_algorithm", "stage_conditions", "step_conditions",
    "NekhoConstants", "Schedule", "StabilityBound", "SteepParams", "choose_Q_m", "compute_constants",
    "stability_time_bound", "theorem_constants", "DriftReport", "Trajectory", "actions", "integrate",
    "measure_drift",
]
