"""Simulation and estimation of two-qubit negativity at the quantum Cramer-Rao limit."""

from . import estimation, kernels, linalg, measurement, simulator, states, tomography
from .errors import EntcrbError
from .estimation import EstimationReport, estimate_negativity, estimate_report, model_discrimination
from .measurement import DIAGONAL, OPTIMAL, MeasurementSetting, fisher_information, optimal_setting_scan
from .simulator import RunConfig, run_experiment
from .states import Model, StateParams, make_state, negativity_closed_form, qfi, qfi_closed_form

__version__ = "0.1.0"

__all__ = [
    "DIAGONAL", "OPTIMAL", "EntcrbError", "EstimationReport", "MeasurementSetting", "Model", "RunConfig",
    "StateParams", "estimate_negativity", "estimate_report", "estimation", "fisher_information", "kernels",
    "linalg", "make_state", "measurement", "model_discrimination", "negativity_closed_form",
    "optimal_setting_scan", "qfi", "qfi_closed_form", "run_experiment", "simulator", "states", "tomography",
]
