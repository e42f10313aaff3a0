"""Differentiable image operations for policy search.

Every op maps a B x C x H x W batch in [0, 1] plus a magnitude ``mu`` in
[0, 1] to a batch of the same shape, clamped to [0, 1]. Magnitudes are mapped
onto each op's native range as ``center + half_width * (2 mu - 1)`` so that
``mu = 0.5`` lands exactly on the range centre (the identity for the
symmetric geometric and enhancement ops).

posterize, solarize, equalize and auto_contrast are not differentiable in
``mu``; they use a straight-through backward in which ``d out / d mu = 1``.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..autodiff import primitives as P
from ..autodiff.primitives import register
from ..autodiff.tensor import Tensor, as_tensor

GRAY = np.array([0.299, 0.587, 0.114], dtype=np.float32)
SMOOTH_KERNEL = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float32) / 13.0


# ------------------------------------------------- non-smooth op primitives


@register("autocontrast", 1)
class AutoContrast:
    """Per image and channel, stretch [min, max] to [0, 1]; flat channels pass through."""

    @staticmethod
    def forward(ctx, x):
        B, C, H, W = x.shape
        flat = x.reshape(B, C, H * W)
        lo_idx = flat.argmin(axis=2)
        hi_idx = flat.argmax(axis=2)
        lo = np.take_along_axis(flat, lo_idx[..., None], 2)
        hi = np.take_along_axis(flat, hi_idx[..., None], 2)
        span = hi - lo
        live = span > 0
        safe = np.where(live, span, np.float32(1))
        y = np.where(live, (flat - lo) / safe, flat)
        ctx.y, ctx.live, ctx.safe, ctx.lo_idx, ctx.hi_idx, ctx.shape = y, live, safe, lo_idx, hi_idx, x.shape
        return y.reshape(x.shape)

    @staticmethod
    def backward(ctx, g):
        B, C, H, W = ctx.shape
        g = g.reshape(B, C, H * W)
        y, live, safe = ctx.y, ctx.live, ctx.safe
        dx = np.where(live, g / safe, g)
        dlo = np.where(live[..., 0], ((g * (y - 1)) / safe).sum(axis=2), 0)
        dhi = np.where(live[..., 0], -((g * y) / safe).sum(axis=2), 0)
        np.add.at(dx, (np.arange(B)[:, None], np.arange(C)[None, :], ctx.lo_idx), dlo)
        np.add.at(dx, (np.arange(B)[:, None], np.arange(C)[None, :], ctx.hi_idx), dhi)
        return (dx.reshape(ctx.shape).astype(np.float32),)


def _equalize_channel(levels):
    """Histogram-equalize one channel of integer levels 0..255; returns a float image in [0, 1]."""
    hist = np.bincount(levels.ravel(), minlength=256)
    nonzero = hist[hist > 0]
    step = (int(hist.sum()) - int(nonzero[-1])) // 255
    if step == 0:
        return None
    lut = (np.concatenate([[0], np.cumsum(hist)[:-1]]) + step // 2) // step
    lut = np.clip(lut, 0, 255)
    return lut[levels].astype(np.float32) / np.float32(255)


@register("equalize", 1)
class Equalize:
    """Histogram equalization over 256 bins per image and channel.

    Backward is straight-through: the op is treated as the identity in x.
    """

    @staticmethod
    def forward(ctx, x):
        out = x.copy()
        levels = np.clip(np.rint(x * 255), 0, 255).astype(np.int64)
        B, C = x.shape[:2]
        for b in range(B):
            for c in range(C):
                eq = _equalize_channel(levels[b, c])
                if eq is not None:
                    out[b, c] = eq
        return out

    @staticmethod
    def backward(ctx, g):
        return (g,)


@register("solarize", 2)
class Solarize:
    """Invert pixels at or above the threshold ``mu``; straight-through in ``mu``."""

    @staticmethod
    def forward(ctx, x, mu):
        below = x < mu
        ctx.below, ctx.mu_shape = below, mu.shape
        return np.where(below, x, 1 - x)

    @staticmethod
    def backward(ctx, g):
        dx = np.where(ctx.below, g, -g) if ctx.needs[0] else None
        dmu = np.full(ctx.mu_shape, g.sum(), dtype=np.float32) if ctx.needs[1] else None
        return dx, dmu


def posterize_bits(mu):
    return int(np.clip(np.rint(4.5 + 3.5 * (2 * float(np.reshape(mu, -1)[0]) - 1)), 1, 8))


@register("posterize", 2)
class Posterize:
    """Keep the top ``bits`` of each 8-bit level, bits = round(1 + 7 mu).

    Straight-through in both x and ``mu``.
    """

    @staticmethod
    def forward(ctx, x, mu):
        ctx.mu_shape = mu.shape
        shift = 8 - posterize_bits(mu)
        levels = np.clip(np.floor(x * 255), 0, 255).astype(np.int64)
        return ((levels >> shift) << shift).astype(np.float32) / np.float32(255)

    @staticmethod
    def backward(ctx, g):
        dmu = np.full(ctx.mu_shape, g.sum(), dtype=np.float32) if ctx.needs[1] else None
        return (g if ctx.needs[0] else None), dmu


# ------------------------------------------------------------ the op table


def _native(mu, center, half):
    """Map mu in [0, 1] to center + half * (2 mu - 1), exact at mu = 0.5."""
    return (mu * 2.0 - 1.0) * half + center


_EYE = np.array([[1, 0, 0], [0, 1, 0]], dtype=np.float32)


def _unit(r, c):
    e = np.zeros((2, 3), dtype=np.float32)
    e[r, c] = 1
    return Tensor(e)


def _shear(axis):
    basis = _unit(0, 1) if axis == "x" else _unit(1, 0)

    def fn(x, mu, partner):
        factor = _native(mu, 0.0, 0.3)
        return P.affine_grid_sample(x, Tensor(_EYE) + factor * basis)

    return fn


def _translate(axis):
    def fn(x, mu, partner):
        extent = x.shape[3] if axis == "x" else x.shape[2]
        shift = _native(mu, 0.0, 0.45) * float(extent)
        # content moves by +shift pixels, so the sampler reads at -shift
        basis = _unit(0, 2) if axis == "x" else _unit(1, 2)
        return P.affine_grid_sample(x, Tensor(_EYE) - shift * basis)

    return fn


def _rotate(x, mu, partner):
    radians = _native(mu, 0.0, 30.0) * (np.pi / 180.0)
    c, s = P.cos(radians), P.sin(radians)
    diag = Tensor(np.array([[1, 0, 0], [0, 1, 0]], dtype=np.float32))
    skew = Tensor(np.array([[0, -1, 0], [1, 0, 0]], dtype=np.float32))
    return P.affine_grid_sample(x, c * diag + s * skew)


def _gray(x):
    if x.shape[1] == 3:
        return P.sum(x * Tensor(GRAY.reshape(1, 3, 1, 1)), axis=1, keepdims=True)
    return P.mean(x, axis=1, keepdims=True)


def _contrast(x, mu, partner):
    mean = P.mean(_gray(x), axis=(1, 2, 3), keepdims=True)
    return P.linear_blend(mean, x, _native(mu, 1.0, 0.9))


def _color(x, mu, partner):
    return P.linear_blend(_gray(x), x, _native(mu, 1.0, 0.9))


def _brightness(x, mu, partner):
    return x * _native(mu, 1.0, 0.9)


def _sharpness(x, mu, partner):
    C, H, W = x.shape[1:]
    kernel = Tensor(np.broadcast_to(SMOOTH_KERNEL, (C, 1, 3, 3)).copy())
    blurred = P.depthwise_conv2d(x, kernel, padding=1)
    interior = np.zeros((1, 1, H, W), dtype=np.float32)
    interior[:, :, 1:-1, 1:-1] = 1
    # border pixels keep their original value in the degenerate image
    degenerate = P.linear_blend(x, blurred, Tensor(interior))
    return P.linear_blend(degenerate, x, _native(mu, 1.0, 0.9))


def _auto_contrast(x, mu, partner):
    return P.primitive_forward("autocontrast", (x,))


def _equalize(x, mu, partner):
    return P.primitive_forward("equalize", (x,))


def _solarize(x, mu, partner):
    return P.primitive_forward("solarize", (x, mu))


def _posterize(x, mu, partner):
    return P.primitive_forward("posterize", (x, mu))


def _flip(x, mu, partner):
    return P.flip(x, -1)


def _invert(x, mu, partner):
    return 1.0 - x


def _sample_pairing(x, mu, partner):
    return P.linear_blend(x, partner, _native(mu, 0.2, 0.2))


@dataclass(frozen=True)
class ImageOp:
    name: str
    fn: Callable
    low: float = 0.0
    high: float = 1.0
    uses_magnitude: bool = True
    differentiable_in_mu: bool = True
    identity_mu: Optional[float] = None
    needs_partner: bool = False

    def magnitude(self, mu):
        """Native parameter value for magnitude ``mu`` (documentation / inspection)."""
        center, half = (self.low + self.high) / 2, (self.high - self.low) / 2
        return center + half * (2 * float(mu) - 1)

    def __call__(self, x, mu, partner=None):
        return apply_image_op(self, x, mu, partner=partner)


OPS = {
    op.name: op
    for op in [
        ImageOp("shear_x", _shear("x"), -0.3, 0.3, identity_mu=0.5),
        ImageOp("shear_y", _shear("y"), -0.3, 0.3, identity_mu=0.5),
        ImageOp("translate_x", _translate("x"), -0.45, 0.45, identity_mu=0.5),
        ImageOp("translate_y", _translate("y"), -0.45, 0.45, identity_mu=0.5),
        ImageOp("rotate", _rotate, -30.0, 30.0, identity_mu=0.5),
        ImageOp("auto_contrast", _auto_contrast, uses_magnitude=False, differentiable_in_mu=False),
        ImageOp("horizontal_flip", _flip, uses_magnitude=False, differentiable_in_mu=False),
        ImageOp("invert", _invert, uses_magnitude=False, differentiable_in_mu=False),
        ImageOp("equalize", _equalize, uses_magnitude=False, differentiable_in_mu=False),
        ImageOp("solarize", _solarize, 0.0, 1.0, differentiable_in_mu=False),
        ImageOp("posterize", _posterize, 1.0, 8.0, differentiable_in_mu=False),
        ImageOp("contrast", _contrast, 0.1, 1.9, identity_mu=0.5),
        ImageOp("color", _color, 0.1, 1.9, identity_mu=0.5),
        ImageOp("brightness", _brightness, 0.1, 1.9, identity_mu=0.5),
        ImageOp("sharpness", _sharpness, 0.1, 1.9, identity_mu=0.5),
        ImageOp("sample_pairing", _sample_pairing, 0.0, 0.4, identity_mu=0.0, needs_partner=True),
    ]
}

DEFAULT_OP_SET = tuple(OPS)
GEOMETRIC_OPS = ("shear_x", "shear_y", "translate_x", "translate_y", "rotate")


def get_op(name):
    try:
        return OPS[name]
    except KeyError:
        raise KeyError(f"unknown image op {name!r}; known: {', '.join(OPS)}") from None


def apply_image_op(op, x, mu, partner=None, rng=None):
    """Apply ``op`` to batch ``x`` at magnitude ``mu``; output clamped to [0, 1].

    ``partner`` is the blend source for sample_pairing; when omitted a random
    same-batch permutation drawn from ``rng`` is used.
    """
    if isinstance(op, str):
        op = get_op(op)
    x = as_tensor(x)
    if x.ndim != 4 or min(x.shape[2:]) < 2:
        raise ValueError(f"{op.name}: expected B x C x H x W with H, W >= 2, got {x.shape}")
    lo, hi = float(x.data.min()), float(x.data.max())
    if lo < -1e-6 or hi > 1 + 1e-6:
        raise ValueError(f"{op.name}: pixel values must lie in [0, 1], got [{lo:.4g}, {hi:.4g}]")
    mu = as_tensor(mu)
    if op.needs_partner and partner is None:
        perm = rng.permutation(x.shape[0]) if rng is not None else np.roll(np.arange(x.shape[0]), 1)
        partner = P.getitem(x, perm)
    return P.clamp(op.fn(x, mu, partner), 0.0, 1.0)
