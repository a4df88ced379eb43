"""Equation-free coarse-graining of 2D Brownian particles in a shear flow.

Coarse states are Legendre coefficients of one marginal and M conditional
inverse CDFs.  On top of the lift / evolve / restrict time-stepper sit
coarse projective integration, a scale-invariance probe and coarse
dynamic renormalization, validated against closed-form Gaussian solutions.
"""
from .analytic import AnalyticParams, pdf_asymptotic, pdf_selfsimilar, pde_residual
from .basis import CoarseState, LegendreBasis, linear_state
from .cdr import CdrSettings, Template, cdr_fixed_point, similarity_exponent, track_rescaling
from .config import ConfigError, RunConfig, load_config, preset_config
from .cpi import CpiSchedule, cpi_run, direct_run
from .observables import MARGINAL_X, MARGINAL_Y, CdfGrid, restrict_cdf
from .probe import PROBE_SET1, PROBE_SET2, ProbeConfig, newton_solve_p
from .sde import Model, ParticleEnsemble, RngStream, SdeParams, evolve, point_source, uniform_square
from .stepper import StepperConfig, coarse_step

__version__ = "0.1.0"

__all__ = [
    "AnalyticParams", "pdf_asymptotic", "pdf_selfsimilar", "pde_residual",
    "CoarseState", "LegendreBasis", "linear_state",
    "CdrSettings", "Template", "cdr_fixed_point", "similarity_exponent", "track_rescaling",
    "ConfigError", "RunConfig", "load_config", "preset_config",
    "CpiSchedule", "cpi_run", "direct_run",
    "MARGINAL_X", "MARGINAL_Y", "CdfGrid", "restrict_cdf",
    "PROBE_SET1", "PROBE_SET2", "ProbeConfig", "newton_solve_p",
    "Model", "ParticleEnsemble", "RngStream", "SdeParams", "evolve", "point_source", "uniform_square",
    "StepperConfig", "coarse_step",
]
