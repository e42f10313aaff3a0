"""Composite differentiable functions built on the primitives."""

import numpy as np

from . import primitives as P
from .tensor import Tensor, as_tensor

P_EPS = 1e-6
_TINY = float(np.finfo(np.float32).tiny)
_EPSNEG = float(np.finfo(np.float32).epsneg)


def _check_eta(eta):
    if not eta > 0:
        raise ValueError(f"temperature must be positive, got {eta}")


def softmax_temperature(z, eta=1.0, axis=-1):
    """softmax(z / eta)."""
    _check_eta(eta)
    z = as_tensor(z)
    if z.size == 0:
        raise ValueError("softmax over an empty vector")
    return P.softmax(P.scalar_mul(z, 1.0 / eta), axis=axis)


def gumbel_softmax_sample(z, eta, rng):
    """Relaxed categorical sample: softmax((z + g) / eta) with g ~ Gumbel(0, 1)."""
    _check_eta(eta)
    z = as_tensor(z)
    return softmax_temperature(z + Tensor(rng.gumbel(z.shape)), eta)


def logit(p):
    return P.log(p) - P.log(1.0 - p)


def relaxed_bernoulli(p, eta, rng):
    """Differentiable surrogate of a Bernoulli(p) gate.

    sigmoid((logit(p) + g1 - g2) / eta) with independent Gumbel draws; p is
    clamped to [1e-6, 1 - 1e-6] first so the logit stays finite.
    """
    _check_eta(eta)
    p = P.clamp(as_tensor(p), P_EPS, 1.0 - P_EPS)
    noise = rng.gumbel(p.shape) - rng.gumbel(p.shape)
    gate = P.sigmoid(P.scalar_mul(logit(p) + Tensor(noise), 1.0 / eta))
    # float32 sigmoid saturates to exactly 0/1; keep samples strictly inside
    return P.clamp(gate, _TINY, 1.0 - _EPSNEG)


def cross_entropy(logits, labels):
    return P.primitive_forward("cross_entropy", (logits,), labels=np.asarray(labels, dtype=np.int64))


def global_norm(arrays):
    return float(np.sqrt(sum(float(np.sum(np.square(a, dtype=np.float64))) for a in arrays)))
