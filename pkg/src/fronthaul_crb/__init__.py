"""Robust fronthaul quantization design for CRB-optimal cloud radio positioning."""

from .errors import RelaxationInapplicableError, SolverError, UnlocalizableError
from .inner import RobustProblem, SolverOptions, solve_inner
from .metrics import QuantizerDesign, SymMat2, crb_trace, efim, rate, worst_case_q_matrix
from .scenario import (
    Scenario,
    ScenarioError,
    bundled_scenario,
    default_ru_layout,
    derive_circle_geometry,
    load_scenario,
    load_scenario_file,
)
from .solver import DcState, baseline_white_design, solve_robust
from .spectra import FrequencyGrid, SampledSpectrum, make_grid

__version__ = "0.1.0"

__all__ = [
    "DcState",
    "FrequencyGrid",
    "QuantizerDesign",
    "RelaxationInapplicableError",
    "RobustProblem",
    "SampledSpectrum",
    "Scenario",
    "ScenarioError",
    "SolverError",
    "SolverOptions",
    "SymMat2",
    "UnlocalizableError",
    "baseline_white_design",
    "bundled_scenario",
    "crb_trace",
    "default_ru_layout",
    "derive_circle_geometry",
    "efim",
    "load_scenario",
    "load_scenario_file",
    "make_grid",
    "rate",
    "solve_inner",
    "solve_robust",
    "worst_case_q_matrix",
]
