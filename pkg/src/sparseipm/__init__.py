"""Interior point-proximal method of multipliers toolkit for sparse
approximation: portfolio selection, fused-lasso classification, Poisson image
restoration and l1-regularized logistic regression."""

from .ippmm import SolveReport, SolverOptions, solve
from .problems import (ConvexProgram, FusedLassoLsInstance, LogisticInstance,
                       PoissonTvInstance, PortfolioInstance,
                       build_fused_lasso_ls, build_logistic_l1,
                       build_poisson_tv, build_portfolio_qp)

__all__ = [
    "ConvexProgram", "FusedLassoLsInstance", "LogisticInstance",
    "PoissonTvInstance", "PortfolioInstance", "SolveReport", "SolverOptions",
    "build_fused_lasso_ls", "build_logistic_l1", "build_poisson_tv",
    "build_portfolio_qp", "solve",
]

__version__ = "0.1.0"
