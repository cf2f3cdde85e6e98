"""Sliced and subspace-robust Wasserstein distances with amortized
projection models, plus minimax trainers for small push-forward generators,
brute-force oracles, gradient verification, and a timing harness."""

from .measures import (
    ContractError,
    Direction,
    EmpiricalMeasure,
    ProjectedSamples,
    ProjectionFrame,
    project,
    sample_minibatch,
    sample_sphere,
    wasserstein_1d,
    wasserstein_1d_pow,
)
from .amortized import (
    AmortizedParams,
    DegenerateDirectionError,
    DegenerateFrameError,
    LinearAmortizedParams,
    MlpBlock,
    ProjectedAmortizedParams,
    flop_estimate,
    forward_generalized,
    forward_linear,
    forward_nonlinear,
    forward_projected,
    parameter_count,
)
from .generator import GeneratorParams, generator_forward
from .grad import ValueGrad, fd_check, grad_phi_loss, grad_psi_loss, grad_theta_w1d
from .oracles import exact_wasserstein, grid_max_sw, m_max_sw_oracle
from .optim import AdamState, adam_step
from .slicers import SliceOptConfig, max_sw, prw, sw_estimate
from .trainer import TrainConfig, TrainResult, train, train_amortized, train_max_sw, train_sw
from .datasets import SyntheticSpec, generate, load_idx

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AmortizedParams",
    "ContractError",
    "DegenerateDirectionError",
    "DegenerateFrameError",
    "Direction",
    "EmpiricalMeasure",
    "GeneratorParams",
    "LinearAmortizedParams",
    "MlpBlock",
    "ProjectedAmortizedParams",
    "ProjectedSamples",
    "ProjectionFrame",
    "SliceOptConfig",
    "SyntheticSpec",
    "TrainConfig",
    "TrainResult",
    "ValueGrad",
    "adam_step",
    "exact_wasserstein",
    "fd_check",
    "flop_estimate",
    "forward_generalized",
    "forward_linear",
    "forward_nonlinear",
    "forward_projected",
    "generate",
    "generator_forward",
    "grad_phi_loss",
    "grad_psi_loss",
    "grad_theta_w1d",
    "grid_max_sw",
    "load_idx",
    "m_max_sw_oracle",
    "max_sw",
    "parameter_count",
    "project",
    "prw",
    "sample_minibatch",
    "sample_sphere",
    "sw_estimate",
    "train",
    "train_amortized",
    "train_max_sw",
    "train_sw",
    "wasserstein_1d",
    "wasserstein_1d_pow",
]
