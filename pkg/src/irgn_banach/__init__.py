"""Iteratively regularized Gauss-Newton reconstructions with convex penalties."""

__version__ = "0.1.0"

from .core import Field, Grid, IterationRecord, RegSchedule, add_noise, l2_norm, schedule_alpha
from .forward import (Diffusion1D, Problem, Reaction1D, Reaction2D, estimate_operator_norm,
                      get_preset)
from .irgn import RunResult, StoppingConfig, run, scaling_check, stopping_indices
from .penalties import ElasticNet, Penalty, SobolevWp, SquaredL2, TotalVariation, make_penalty
from .subproblem import InnerControls, SubproblemSpec, dense_oracle, minimize, objective_and_gradient

__all__ = [
    "Field", "Grid", "IterationRecord", "RegSchedule", "add_noise", "l2_norm", "schedule_alpha",
    "Diffusion1D", "Problem", "Reaction1D", "Reaction2D", "estimate_operator_norm", "get_preset",
    "RunResult", "StoppingConfig", "run", "scaling_check", "stopping_indices",
    "ElasticNet", "Penalty", "SobolevWp", "SquaredL2", "TotalVariation", "make_penalty",
    "InnerControls", "SubproblemSpec", "dense_oracle", "minimize", "objective_and_gradient",
]
