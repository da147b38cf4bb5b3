"""Stieltjes-derivative parabolic problems: derivators, Lebesgue-Stieltjes
quadrature, linear g-ODEs, P1 finite elements, spectral Galerkin solution and
the silkworm population model."""
from .derivator import Derivator, DomainError, Segment, identity_derivator, load_derivator, silkworm_derivator, step_derivator
from .g_ode import GFunctionSample, LinearGODE, RegressivityError, solve_linear
from .spectral_solver import ParabolicProblem, check_hypotheses, solve
from .stieltjes_integral import integrate, integrate_dt, lp_norm

__version__ = "0.1.0"

__all__ = [
    "Derivator",
    "DomainError",
    "Segment",
    "identity_derivator",
    "silkworm_derivator",
    "step_derivator",
    "load_derivator",
    "integrate",
    "integrate_dt",
    "lp_norm",
    "LinearGODE",
    "GFunctionSample",
    "RegressivityError",
    "solve_linear",
    "ParabolicProblem",
    "check_hypotheses",
    "solve",
]
