"""LP and MILP solvers: dual simplex, branch and bound, enumeration oracle."""
from .lp import INTEGRALITY_TOL, FEASIBILITY_TOL, LpEngine, LpSolution, NumericalError, solve_lp
from .bnb import MilpResult, branch_and_bound, brute_force
from .kernels import BACKEND as KERNEL_BACKEND

__all__ = ["solve_lp", "LpEngine", "LpSolution", "NumericalError", "MilpResult",
           "branch_and_bound", "brute_force", "KERNEL_BACKEND", "INTEGRALITY_TOL",
           "FEASIBILITY_TOL"]
