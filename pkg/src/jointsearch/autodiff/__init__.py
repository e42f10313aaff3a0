"""Minimal reverse-mode automatic differentiation on float32 numpy arrays."""

from . import primitives
from .functional import (
    cross_entropy,
    gumbel_softmax_sample,
    relaxed_bernoulli,
    softmax_temperature,
)
from .primitives import REGISTRY, primitive_forward
from .rng import Rng
from .tensor import (
    Gradients,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    UnknownOpError,
    as_tensor,
    backward,
    backward_calls,
    current_tape,
    no_grad,
    parameter,
)

__all__ = [
    "Gradients",
    "REGISTRY",
    "Rng",
    "ShapeError",
    "Tape",
    "TapeError",
    "Tensor",
    "UnknownOpError",
    "as_tensor",
    "backward",
    "backward_calls",
    "cross_entropy",
    "current_tape",
    "gumbel_softmax_sample",
    "no_grad",
    "parameter",
    "primitive_forward",
    "primitives",
    "relaxed_bernoulli",
    "softmax_temperature",
]
