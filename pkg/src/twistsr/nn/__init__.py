"""Minimal reverse-mode tensor engine and the networks built on it."""

from .functional import conv2d, conv2d_backward, conv2d_forward, leaky_relu
from .models import (
    CriticConfig,
    GeneratorConfig,
    critic_forward,
    generator_forward,
    init_critic,
    init_generator,
    rrdb_forward,
    zero_generator,
)
from .optim import adam_step, weight_decay_gradient, weight_norm_sq
from .params import ParameterStore
from .tensor import Tensor, no_grad

__all__ = [
    "CriticConfig", "GeneratorConfig", "ParameterStore", "Tensor", "adam_step", "conv2d",
    "conv2d_backward", "conv2d_forward", "critic_forward", "generator_forward", "init_critic",
    "init_generator", "leaky_relu", "no_grad", "rrdb_forward", "weight_decay_gradient",
    "weight_norm_sq", "zero_generator",
]
