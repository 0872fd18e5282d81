"""Change-point regression with a smooth nuisance component.

The estimator models observations as ``Y_i = f(i/n) + g(i/n) + noise`` with
``f`` piecewise constant and ``g`` smooth.  A fused-Lasso fit on
kernel-smoothed residuals screens candidate changes, PELT prunes them and
an unpenalised refit gives the final step function.
"""

from .bench import BenchResult, DetectionSummary, amse, detection_metrics, run_bench
from .cv import CvGrid, CvReport, cross_validate, cv_fit, make_grid
from .lasso import BandedDesign, LassoSolution, build_design, lasso_path, solve_lasso
from .model import INFINITE, FitResult, Scenario, Series, StepFunction, simulate
from .pelt import PeltConfig, pelt, sic_penalty
from .pipeline import PipelineConfig, fit, fit_path
from .smoother import KernelSpec, SmootherMatrix, build_kernel_smoother, build_spline_smoother

__version__ = "0.1.0"

__all__ = [
    "INFINITE",
    "Series",
    "StepFunction",
    "FitResult",
    "Scenario",
    "simulate",
    "KernelSpec",
    "SmootherMatrix",
    "build_kernel_smoother",
    "build_spline_smoother",
    "BandedDesign",
    "LassoSolution",
    "build_design",
    "solve_lasso",
    "lasso_path",
    "PeltConfig",
    "pelt",
    "sic_penalty",
    "PipelineConfig",
    "fit",
    "fit_path",
    "CvGrid",
    "CvReport",
    "make_grid",
    "cross_validate",
    "cv_fit",
    "BenchResult",
    "DetectionSummary",
    "amse",
    "detection_metrics",
    "run_bench",
    "__version__",
]
