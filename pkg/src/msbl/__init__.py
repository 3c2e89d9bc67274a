"""Spectral-Galerkin laboratory for the slow-fast stochastic Burgers system."""

from .coefficients import ModelSpec, get_model, linear_gaussian, general_model, validate_assumptions
from .experiments import (ErrorReport, fit_order, galerkin_refinement_check, moment_check,
                          strong_error_study, weak_error_study)
from .frozen import estimate_fbar_ergodic, fbar_analytic, poisson_corrector_linear
from .integrators import SimParams, run_paths, simulate_averaged, simulate_coupled
from .noise import CovSpec, NoiseStream
from .spectral import SineField, burgers_B

__version__ = "0.1.0"
