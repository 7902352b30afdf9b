"""Periodic steady states of the Giesekus model in oscillatory shear.

Two routes to the same answer: a spectral harmonic-balance solver
(:mod:`giesekus_hb.hb_solver`) and time integration to the alternance state
(:mod:`giesekus_hb.ivp_solver`). :mod:`giesekus_hb.analysis` turns either
into moduli, intensities, residual errors and convergence data.
"""

from .analysis import (compare_hb_ni, convergence_study, evaluate_waveform, fit_decay,
                       harmonic_intensities, moduli_from_coefficients, residual_error)
from .core import (HarmonicSpectrum, Loading, ModelParams, SpectralSolution, Waveform,
                   lve_moduli, maos_initial_guess, maos_shear_intrinsics)
from .hb_solver import HBSolveError, SolverOptions, ladder_solve, newton_solve
from .ivp_solver import IntegratorOptions, IVPError, solve_ivp

__all__ = [
    "HBSolveError", "HarmonicSpectrum", "IVPError", "IntegratorOptions", "Loading", "ModelParams",
    "SolverOptions", "SpectralSolution", "Waveform", "compare_hb_ni", "convergence_study",
    "evaluate_waveform", "fit_decay", "harmonic_intensities", "ladder_solve", "lve_moduli",
    "maos_initial_guess", "maos_shear_intrinsics", "moduli_from_coefficients", "newton_solve",
    "residual_error", "solve_ivp",
]
