"""Minimum-transmission-power planning for OFDMA heterogeneous networks.

Library layout:

- :mod:`hetpower.model`     physical model (SINR, Shannon rate, feasibility)
- :mod:`hetpower.ppf`       piecewise power-function rate approximation
- :mod:`hetpower.gpsolve`   log-domain geometric program (barrier method)
- :mod:`hetpower.migp`      branch-and-bound over user association
- :mod:`hetpower.baselines` association rules and iterative references
- :mod:`hetpower.rounding`  integer resource-block assignment
- :mod:`hetpower.scenario`  synthetic scenario generation and persistence
- :mod:`hetpower.cli`       command-line pipeline (solve, bench, report)
"""

from .model import Allocation, Assignment, FeasibilityReport, Scenario, check_feasible, rate, sinr
from .ppf import PpfApprox, build_ppf, derive_knots, eval_envelope, fit_piece
from .gpsolve import GpProblem, SolveReport, SolverOptions, phase1, solve_gp
from .migp import enumerate_oracle, solve_migp
from .scenario import GeneratorParams, generate, load, save

__all__ = [
    "Allocation",
    "Assignment",
    "FeasibilityReport",
    "Scenario",
    "check_feasible",
    "rate",
    "sinr",
    "PpfApprox",
    "build_ppf",
    "derive_knots",
    "eval_envelope",
    "fit_piece",
    "GpProblem",
    "SolveReport",
    "SolverOptions",
    "phase1",
    "solve_gp",
    "enumerate_oracle",
    "solve_migp",
    "GeneratorParams",
    "generate",
    "load",
    "save",
]

__version__ = "0.1.0"
