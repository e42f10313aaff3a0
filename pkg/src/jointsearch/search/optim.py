"""Momentum SGD and Adam over lists of Tensors, with explicit state."""

import math

import numpy as np


def clip_grad_norm(grads, max_norm):
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    grads = [g for g in grads if g is not None]
    total = math.sqrt(sum(float(np.dot(g.ravel().astype(np.float64), g.ravel())) for g in grads))
    if max_norm is not None and total > max_norm:
        scale = np.float32(max_norm / (total + 1e-6))
        for g in grads:
            g *= scale
    return total


def cosine_lr(base, minimum, epoch, epochs):
    return minimum + 0.5 * (base - minimum) * (1 + math.cos(math.pi * epoch / epochs))


class SGD:
    def __init__(self, params, lr=0.025, momentum=0.9, weight_decay=3e-4):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr, self.momentum, self.weight_decay = lr, momentum, weight_decay
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads):
        lr, mom, wd = np.float32(self.lr), np.float32(self.momentum), np.float32(self.weight_decay)
        for p, g, v in zip(self.params, grads, self.velocity):
            if g is None:
                continue
            d = g + wd * p.data if wd else g
            v *= mom
            v += d
            p.data -= lr * v

    def state_arrays(self):
        return {f"v{i}": v for i, v in enumerate(self.velocity)}

    def load_state_arrays(self, arrays):
        for i, v in enumerate(self.velocity):
            v[...] = arrays[f"v{i}"]


class Adam:
    """Adam with L2 weight decay; parameters whose gradient is None are skipped
    (their step counters do not advance)."""

    def __init__(self, params, lr=3e-4, betas=(0.5, 0.999), weight_decay=1e-3, eps=1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr, self.betas, self.weight_decay, self.eps = lr, tuple(betas), weight_decay, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = np.zeros(len(self.params), dtype=np.int64)

    def step(self, grads):
        b1, b2 = self.betas
        for i, (p, g, m, v) in enumerate(zip(self.params, grads, self.m, self.v)):
            if g is None:
                continue
            self.t[i] += 1
            c1 = 1 - b1 ** int(self.t[i])
            c2 = 1 - b2 ** int(self.t[i])
            d = g + np.float32(self.weight_decay) * p.data if self.weight_decay else g
            m[...] = b1 * m + (1 - b1) * d
            v[...] = b2 * v + (1 - b2) * d * d
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= np.float32(self.lr) * update.astype(np.float32)

    def state_arrays(self):
        out = {"t": self.t}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"], out[f"v{i}"] = m, v
        return out

    def load_state_arrays(self, arrays):
        self.t[...] = arrays["t"]
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            m[...] = arrays[f"m{i}"]
            v[...] = arrays[f"v{i}"]
