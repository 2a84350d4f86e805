"""Conductivity reconstruction from one internal gradient measurement.

The library recovers the spatially varying coefficient of an elliptic
equation by minimizing a mixed least-squares loss over tanh networks for the
conductivity and the flux, with Monte Carlo collocation in place of the
integrals.  See the README for the CLI and the experiment catalog.
"""

from .geometry import BoxDomain, CollocationSet, sample_boundary, sample_interior, sample_subdomain
from .loss import (
    LossBreakdown,
    LossWeights,
    assemble_dirichlet,
    assemble_neumann,
    data_residual,
    dirichlet_bc_residual,
    divergence_residual,
    flux_bc_residual,
    loss_gradient,
    seminorm_penalty,
    tv_penalty,
)
from .metrics import export_grid, relative_l2_error, relative_l2_error_slice
from .network import (
    AdmissibleBounds,
    MlpSpec,
    ParamSet,
    init_params,
    mlp_forward,
    mlp_forward_batch,
    mlp_forward_with_jacobian,
    parallelize,
    project_admissible,
)
from .optimize import AdamState, TrainConfig, TrainResult, adam_step, lr_schedule, train
from .problems import EXAMPLE_IDS, ObservationField, ProblemInstance, make_example, synthesize_observation
from .tape import Tape, check_gradient

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AdmissibleBounds",
    "BoxDomain",
    "CollocationSet",
    "EXAMPLE_IDS",
    "LossBreakdown",
    "LossWeights",
    "MlpSpec",
    "ObservationField",
    "ParamSet",
    "ProblemInstance",
    "Tape",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "assemble_dirichlet",
    "assemble_neumann",
    "check_gradient",
    "data_residual",
    "dirichlet_bc_residual",
    "divergence_residual",
    "export_grid",
    "flux_bc_residual",
    "init_params",
    "loss_gradient",
    "lr_schedule",
    "make_example",
    "mlp_forward",
    "mlp_forward_batch",
    "mlp_forward_with_jacobian",
    "parallelize",
    "project_admissible",
    "relative_l2_error",
    "relative_l2_error_slice",
    "sample_boundary",
    "sample_interior",
    "sample_subdomain",
    "seminorm_penalty",
    "synthesize_observation",
    "train",
    "tv_penalty",
]
