"""Numerical toolkit for the logistic equation with time-dependent harvesting."""

from .expr import parse
from .ivp import HarvestRHS, integrate_ivp
from .harvest import find_critical_k, particular, separation_integral, classify_at_critical
from .exact import exact_solution, blowdown_time, special_solution
from .periodic import poincare_map, fixed_points, branch_diagram, turning_point

__all__ = [
    "parse", "HarvestRHS", "integrate_ivp", "find_critical_k", "particular",
    "separation_integral", "classify_at_critical", "exact_solution", "blowdown_time",
    "special_solution", "poincare_map", "fixed_points", "branch_diagram", "turning_point",
]
__version__ = "0.1.0"
