"""Noise-robust classification with logit clipping.

Logit-level transforms, a zoo of composite losses with analytic gradients,
label-noise injectors, closed-form loss/risk bounds, and a small numpy MLP
trainer with a reproducible experiment harness.
"""

from logitclip.errors import (
    ConfigError,
    DimensionError,
    DomainError,
    NumericalAbort,
    ParseError,
)
from logitclip.numerics import Rng, log_softmax, log_sum_exp, pnorm, softmax_jacobian, stable_softmax
from logitclip.transforms import ClipConfig, clip_by_norm, clip_by_value, logit_norm
from logitclip.losses import LossSpec, LossValueGrad, loss_forward_backward, make_base_loss
from logitclip.bounds import (
    LossBounds,
    a_const,
    asym_risk_gap,
    ce_clip_bounds,
    lipschitz_composite_bound,
    noisy_risk_decomposition,
    sym_risk_gap,
)
from logitclip.noise import NoiseSpec, NoisyDataset, TransitionMatrix
from logitclip.model import MlpModel
from logitclip.train import TrainConfig, TrainReport, sweep_tau, train

__version__ = "0.1.0"

__all__ = [
    "ClipConfig",
    "ConfigError",
    "DimensionError",
    "DomainError",
    "LossBounds",
    "LossSpec",
    "LossValueGrad",
    "MlpModel",
    "NoiseSpec",
    "NoisyDataset",
    "NumericalAbort",
    "ParseError",
    "Rng",
    "TrainConfig",
    "TrainReport",
    "TransitionMatrix",
    "a_const",
    "asym_risk_gap",
    "ce_clip_bounds",
    "clip_by_norm",
    "clip_by_value",
    "lipschitz_composite_bound",
    "log_softmax",
    "log_sum_exp",
    "logit_norm",
    "loss_forward_backward",
    "make_base_loss",
    "noisy_risk_decomposition",
    "pnorm",
    "softmax_jacobian",
    "stable_softmax",
    "sweep_tau",
    "sym_risk_gap",
    "train",
]
