"""Penalized partially linear additive quantile regression.

Linear covariates enter the conditional quantile directly and are selected
with SCAD, MCP or LASSO penalties; nonlinear covariates enter through
additive B-spline components.
"""

from .fit import FitResult, ModelSpec, RankDeficiencyError, fit_oracle, fit_penalized, kkt_check
from .multi import (MultiFitResult, MultiTauSpec, fit_group_path, fit_group_penalized,
                    fit_multi_oracle, union_selection)
from .penalties import PenaltySpec, concave_part, concave_part_deriv, penalty, penalty_deriv
from .sim import MetricsReport, SimConfig, generate, qq_diagnostic, rate_check, run_simulation, score
from .splines import SplineBasis, build_design, eval_basis, make_basis
from .tuning import LambdaPath, auto_grid, fit_path, lambda_max, qbic
from .wqr import WqrProblem, WqrSolution, check_loss, solve_wqr, subgradient

__version__ = "0.1.0"
