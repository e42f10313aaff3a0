"""Central finite-difference gradient checking."""

import numpy as np

from .tensor import Tape, Tensor, backward, no_grad


def numerical_gradient(fn, inputs, index, weights, step=1e-3):
    """d/dx_index of sum(fn(*inputs) * weights) by central differences.

    ``fn`` must be deterministic (reseed any rng inside it).
    """

    def objective():
        return float(np.sum(fn(*inputs).data.astype(np.float64) * weights))

    x = inputs[index]
    grad = np.zeros(x.size, dtype=np.float64)
    flat = x.data.reshape(-1)
    with no_grad():
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + np.float32(step)
            hi, up = float(flat[k]), objective()
            flat[k] = orig - np.float32(step)
            lo, down = float(flat[k]), objective()
            flat[k] = orig
            # divide by the step float32 actually took
            grad[k] = (up - down) / (hi - lo)
    return grad.reshape(x.shape)


def analytic_gradient(fn, inputs, weights):
    for t in inputs:
        t.grad = None
    with Tape():
        out = fn(*inputs)
        loss = (out * Tensor(weights)).sum()
        grads = backward(loss)
    return [grads[t].astype(np.float64) for t in inputs]


def relative_error(a, b):
    """Norm-wise relative error ||a - b|| / max(||a||, ||b||)."""
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(fn, inputs, step=1e-3, seed=0, which=None):
    """Relative error between analytic and numerical gradients for each input.

    ``inputs`` are Tensors with ``requires_grad`` set for the ones to check;
    returns ``{input position: relative error}``.
    """
    out = fn(*inputs)
    weights = np.random.default_rng(seed).standard_normal(out.shape)
    analytic = analytic_gradient(fn, inputs, weights)
    which = [i for i, t in enumerate(inputs) if t.requires_grad] if which is None else which
    return {
        i: relative_error(analytic[i], numerical_gradient(fn, inputs, i, weights, step))
        for i in which
    }
