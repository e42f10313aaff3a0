"""Differentiable primitive operations.

Each primitive is registered under a kind name and supplies a numpy forward
and a vector-Jacobian backward. :func:`primitive_forward` is the single entry
point that runs a forward pass and records it on the current tape.
"""

import numpy as np

from .. import kernels
from .tensor import (
    ShapeError,
    Tensor,
    UnknownOpError,
    as_tensor,
    current_tape,
    is_grad_enabled,
)

REGISTRY = {}


class Context:
    """Scratch space a primitive's forward leaves for its backward."""

    def __init__(self, needs):
        self.needs = needs


def register(kind, arity):
    """Class decorator adding a primitive to the registry (arity None = variadic)."""

    def deco(cls):
        cls.kind = kind
        cls.arity = arity
        REGISTRY[kind] = cls
        return cls

    return deco


def primitive_forward(kind, inputs, **attrs):
    try:
        prim = REGISTRY[kind]
    except KeyError:
        raise UnknownOpError(f"unknown op kind {kind!r}") from None
    inputs = tuple(as_tensor(t) for t in inputs)
    if prim.arity is not None and len(inputs) != prim.arity:
        raise ShapeError(f"'{kind}' takes {prim.arity} inputs, got {len(inputs)}")
    record = is_grad_enabled() and any(t.requires_grad for t in inputs)
    ctx = Context(tuple(t.requires_grad for t in inputs) if record else ())
    out = Tensor(prim.forward(ctx, *(t.data for t in inputs), **attrs))
    if record:
        tape = current_tape()
        out.requires_grad = True
        out.node = tape.record(kind, inputs, lambda g: prim.backward(ctx, g))
        out.tape = tape
    return out


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_check(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        ra, rb = a.shape[::-1], b.shape[::-1]
        for i in range(min(len(ra), len(rb))):
            if ra[i] != rb[i] and 1 not in (ra[i], rb[i]):
                dim = -(i + 1)
                raise ShapeError(
                    f"{kind}: shapes {a.shape} and {b.shape} mismatch at dim {dim} "
                    f"({ra[i]} vs {rb[i]})"
                ) from None
        raise


def _f32(x):
    return np.asarray(x, dtype=np.float32)


# ---------------------------------------------------------------- elementwise


@register("add", 2)
class Add:
    @staticmethod
    def forward(ctx, a, b):
        _broadcast_check("add", a, b)
        ctx.shapes = (a.shape, b.shape)
        return a + b

    @staticmethod
    def backward(ctx, g):
        sa, sb = ctx.shapes
        return (
            unbroadcast(g, sa) if ctx.needs[0] else None,
            unbroadcast(g, sb) if ctx.needs[1] else None,
        )


@register("sub", 2)
class Sub:
    @staticmethod
    def forward(ctx, a, b):
        _broadcast_check("sub", a, b)
        ctx.shapes = (a.shape, b.shape)
        return a - b

    @staticmethod
    def backward(ctx, g):
        sa, sb = ctx.shapes
        return (
            unbroadcast(g, sa) if ctx.needs[0] else None,
            unbroadcast(-g, sb) if ctx.needs[1] else None,
        )


@register("mul", 2)
class Mul:
    @staticmethod
    def forward(ctx, a, b):
        _broadcast_check("mul", a, b)
        ctx.a, ctx.b = a, b
        return a * b

    @staticmethod
    def backward(ctx, g):
        a, b = ctx.a, ctx.b
        return (
            unbroadcast(g * b, a.shape) if ctx.needs[0] else None,
            unbroadcast(g * a, b.shape) if ctx.needs[1] else None,
        )


@register("div", 2)
class Div:
    @staticmethod
    def forward(ctx, a, b):
        _broadcast_check("div", a, b)
        ctx.a, ctx.b = a, b
        return a / b

    @staticmethod
    def backward(ctx, g):
        a, b = ctx.a, ctx.b
        return (
            unbroadcast(g / b, a.shape) if ctx.needs[0] else None,
            unbroadcast(-g * a / (b * b), b.shape) if ctx.needs[1] else None,
        )


@register("scalar_mul", 1)
class ScalarMul:
    @staticmethod
    def forward(ctx, a, scalar):
        ctx.scalar = np.float32(scalar)
        return a * ctx.scalar

    @staticmethod
    def backward(ctx, g):
        return (g * ctx.scalar,)


@register("scalar_add", 1)
class ScalarAdd:
    @staticmethod
    def forward(ctx, a, scalar):
        return a + np.float32(scalar)

    @staticmethod
    def backward(ctx, g):
        return (g,)


@register("relu", 1)
class Relu:
    @staticmethod
    def forward(ctx, a):
        ctx.mask = a > 0
        return np.where(ctx.mask, a, np.float32(0))

    @staticmethod
    def backward(ctx, g):
        return (g * ctx.mask,)


@register("sigmoid", 1)
class Sigmoid:
    @staticmethod
    def forward(ctx, a):
        out = _f32(0.5 * (1.0 + np.tanh(0.5 * a)))
        ctx.out = out
        return out

    @staticmethod
    def backward(ctx, g):
        s = ctx.out
        return (g * s * (1 - s),)


@register("exp", 1)
class Exp:
    @staticmethod
    def forward(ctx, a):
        ctx.out = np.exp(a)
        return ctx.out

    @staticmethod
    def backward(ctx, g):
        return (g * ctx.out,)


@register("log", 1)
class Log:
    @staticmethod
    def forward(ctx, a):
        ctx.a = a
        return np.log(a)

    @staticmethod
    def backward(ctx, g):
        return (g / ctx.a,)


@register("sin", 1)
class Sin:
    @staticmethod
    def forward(ctx, a):
        ctx.a = a
        return np.sin(a)

    @staticmethod
    def backward(ctx, g):
        return (g * np.cos(ctx.a),)


@register("cos", 1)
class Cos:
    @staticmethod
    def forward(ctx, a):
        ctx.a = a
        return np.cos(a)

    @staticmethod
    def backward(ctx, g):
        return (-g * np.sin(ctx.a),)


@register("clamp", 1)
class Clamp:
    """Clip to [lo, hi]; gradient passes on the closed interval, or the open one
    when ``inclusive`` is false (projection semantics for bounded parameters)."""

    @staticmethod
    def forward(ctx, a, lo, hi, inclusive=True):
        if inclusive:
            ctx.mask = (a >= lo) & (a <= hi)
        else:
            ctx.mask = (a > lo) & (a < hi)
        return np.clip(a, np.float32(lo), np.float32(hi))

    @staticmethod
    def backward(ctx, g):
        return (g * ctx.mask,)


@register("linear_blend", 3)
class LinearBlend:
    """a + w * (b - a): w = 0 gives a, w = 1 gives b."""

    @staticmethod
    def forward(ctx, a, b, w):
        _broadcast_check("linear_blend", a, b)
        _broadcast_check("linear_blend", a, w)
        ctx.a, ctx.b, ctx.w = a, b, w
        return a + w * (b - a)

    @staticmethod
    def backward(ctx, g):
        a, b, w = ctx.a, ctx.b, ctx.w
        return (
            unbroadcast(g * (1 - w), a.shape) if ctx.needs[0] else None,
            unbroadcast(g * w, b.shape) if ctx.needs[1] else None,
            unbroadcast(g * (b - a), w.shape) if ctx.needs[2] else None,
        )


# ------------------------------------------------------------------ structural


@register("sum", 1)
class Sum:
    @staticmethod
    def forward(ctx, a, axis=None, keepdims=False):
        ctx.shape, ctx.axis, ctx.keepdims = a.shape, axis, keepdims
        return _f32(np.sum(a, axis=axis, keepdims=keepdims, dtype=np.float64))

    @staticmethod
    def backward(ctx, g):
        if ctx.axis is not None and not ctx.keepdims:
            g = np.expand_dims(g, ctx.axis)
        return (np.broadcast_to(g, ctx.shape).astype(np.float32),)


@register("mean", 1)
class Mean:
    @staticmethod
    def forward(ctx, a, axis=None, keepdims=False):
        ctx.shape, ctx.axis, ctx.keepdims = a.shape, axis, keepdims
        out = np.mean(a, axis=axis, keepdims=keepdims, dtype=np.float64)
        ctx.count = a.size // max(np.size(out), 1)
        return _f32(out)

    @staticmethod
    def backward(ctx, g):
        if ctx.axis is not None and not ctx.keepdims:
            g = np.expand_dims(g, ctx.axis)
        return (np.broadcast_to(g / np.float32(ctx.count), ctx.shape).astype(np.float32),)


@register("reshape", 1)
class Reshape:
    @staticmethod
    def forward(ctx, a, shape):
        ctx.shape = a.shape
        try:
            return a.reshape(shape)
        except ValueError:
            raise ShapeError(f"reshape: cannot view {a.shape} ({a.size} values) as {shape}") from None

    @staticmethod
    def backward(ctx, g):
        return (g.reshape(ctx.shape),)


@register("flip", 1)
class Flip:
    @staticmethod
    def forward(ctx, a, axis):
        ctx.axis = axis
        return np.flip(a, axis=axis)

    @staticmethod
    def backward(ctx, g):
        return (np.ascontiguousarray(np.flip(g, axis=ctx.axis)),)


@register("getitem", 1)
class GetItem:
    @staticmethod
    def forward(ctx, a, index):
        ctx.shape, ctx.index = a.shape, index
        return a[index]

    @staticmethod
    def backward(ctx, g):
        out = np.zeros(ctx.shape, dtype=np.float32)
        np.add.at(out, ctx.index, g)
        return (out,)


@register("concat", None)
class Concat:
    @staticmethod
    def forward(ctx, *arrays, axis=0):
        ref = arrays[0].shape
        ax = axis % len(ref)
        for arr in arrays[1:]:
            if arr.ndim != len(ref) or any(
                arr.shape[i] != ref[i] for i in range(len(ref)) if i != ax
            ):
                raise ShapeError(f"concat along axis {axis}: shapes {ref} and {arr.shape} differ off-axis")
        ctx.axis = ax
        ctx.splits = np.cumsum([arr.shape[ax] for arr in arrays])[:-1]
        return np.concatenate(arrays, axis=ax)

    @staticmethod
    def backward(ctx, g):
        parts = np.split(g, ctx.splits, axis=ctx.axis)
        return tuple(np.ascontiguousarray(p) if need else None for p, need in zip(parts, ctx.needs))


@register("matmul", 2)
class MatMul:
    @staticmethod
    def forward(ctx, a, b):
        if a.ndim != 2 or b.ndim != 2:
            raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
        if a.shape[1] != b.shape[0]:
            raise ShapeError(
                f"matmul: inner dims differ, a.shape[1]={a.shape[1]} vs b.shape[0]={b.shape[0]}"
            )
        ctx.a, ctx.b = a, b
        return a @ b

    @staticmethod
    def backward(ctx, g):
        return (
            g @ ctx.b.T if ctx.needs[0] else None,
            ctx.a.T @ g if ctx.needs[1] else None,
        )


@register("softmax", 1)
class Softmax:
    @staticmethod
    def forward(ctx, a, axis=-1):
        e = np.exp(a - a.max(axis=axis, keepdims=True))
        out = e / e.sum(axis=axis, keepdims=True)
        ctx.out, ctx.axis = out, axis
        return out

    @staticmethod
    def backward(ctx, g):
        s = ctx.out
        return (s * (g - (g * s).sum(axis=ctx.axis, keepdims=True)),)


@register("cross_entropy", 1)
class CrossEntropy:
    """Mean negative log-softmax of the labelled class over a B x C batch."""

    @staticmethod
    def forward(ctx, logits, labels):
        if logits.ndim != 2:
            raise ShapeError(f"cross_entropy expects B x C logits, got {logits.shape}")
        labels = np.asarray(labels, dtype=np.int64)
        B, C = logits.shape
        if labels.shape != (B,):
            raise ShapeError(f"cross_entropy: {labels.shape[0] if labels.ndim else 0} labels for batch of {B}")
        if labels.size and (labels.min() < 0 or labels.max() >= C):
            bad = int(labels[(labels < 0) | (labels >= C)][0])
            raise ValueError(f"cross_entropy: label {bad} out of range for {C} classes")
        z = logits.astype(np.float64)
        z = z - z.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(z).sum(axis=1))
        logp = z[np.arange(B), labels] - logsum
        ctx.prob = np.exp(z - logsum[:, None])
        ctx.labels = labels
        return _f32(-logp.mean())

    @staticmethod
    def backward(ctx, g):
        p = ctx.prob.copy()
        B = p.shape[0]
        p[np.arange(B), ctx.labels] -= 1.0
        return (_f32(p * (float(np.reshape(g, -1)[0]) / B)),)


# ---------------------------------------------------------------- convolution


def _pair_check(kind, x, ndim=4):
    if x.ndim != ndim:
        raise ShapeError(f"{kind} expects a {ndim}-d B x C x H x W input, got shape {x.shape}")


@register("conv2d", 2)
class Conv2d:
    """Dense 2-d convolution (cross-correlation), weight Co x Ci x kh x kw."""

    @staticmethod
    def forward(ctx, x, w, stride=1, padding=0, dilation=1):
        _pair_check("conv2d", x)
        if w.ndim != 4 or w.shape[1] != x.shape[1]:
            raise ShapeError(
                f"conv2d: input has {x.shape[1]} channels (dim 1) but weight {w.shape} expects "
                f"{w.shape[1] if w.ndim == 4 else '?'}"
            )
        B, Ci, H, W = x.shape
        Co, _, kh, kw = w.shape
        Ho = kernels.conv_out_size(H, kh, stride, padding, dilation)
        Wo = kernels.conv_out_size(W, kw, stride, padding, dilation)
        if Ho < 1 or Wo < 1:
            raise ShapeError(f"conv2d: kernel {kh}x{kw} does not fit input {H}x{W}")
        pointwise = kh == kw == 1 and stride == 1 and padding == 0
        if pointwise:
            cols = x.reshape(B, Ci, H * W).transpose(1, 0, 2).reshape(Ci, B * H * W)
        else:
            cols = kernels.im2col(x, kh, kw, stride, padding, dilation)
            cols = cols.reshape(B, Ci * kh * kw, Ho * Wo).transpose(1, 0, 2).reshape(-1, B * Ho * Wo)
        out = w.reshape(Co, -1) @ cols
        ctx.cols, ctx.w = cols, w
        ctx.geom = (B, Ci, H, W, Ho, Wo, stride, padding, dilation, pointwise)
        return np.ascontiguousarray(out.reshape(Co, B, Ho, Wo).transpose(1, 0, 2, 3))

    @staticmethod
    def backward(ctx, g):
        B, Ci, H, W, Ho, Wo, stride, padding, dilation, pointwise = ctx.geom
        w = ctx.w
        Co, _, kh, kw = w.shape
        g2 = g.transpose(1, 0, 2, 3).reshape(Co, B * Ho * Wo)
        dw = (g2 @ ctx.cols.T).reshape(w.shape) if ctx.needs[1] else None
        dx = None
        if ctx.needs[0]:
            dcols = w.reshape(Co, -1).T @ g2
            if pointwise:
                dx = np.ascontiguousarray(dcols.reshape(Ci, B, H, W).transpose(1, 0, 2, 3))
            else:
                dcols = dcols.reshape(Ci, kh, kw, B, Ho, Wo).transpose(3, 0, 1, 2, 4, 5)
                dx = kernels.col2im(np.ascontiguousarray(dcols), H, W, stride, padding, dilation)
        return dx, dw


@register("depthwise_conv2d", 2)
class DepthwiseConv2d:
    """Per-channel convolution, weight C x 1 x kh x kw."""

    @staticmethod
    def forward(ctx, x, w, stride=1, padding=0, dilation=1):
        _pair_check("depthwise_conv2d", x)
        if w.ndim != 4 or w.shape[0] != x.shape[1] or w.shape[1] != 1:
            raise ShapeError(
                f"depthwise_conv2d: input has {x.shape[1]} channels (dim 1), weight shape {w.shape} "
                f"must be ({x.shape[1]}, 1, kh, kw)"
            )
        B, C, H, W = x.shape
        kh, kw = w.shape[2:]
        cols = kernels.im2col(x, kh, kw, stride, padding, dilation)
        Ho, Wo = cols.shape[-2:]
        cols = cols.reshape(B, C, kh * kw, Ho * Wo)
        out = np.einsum("bckl,ck->bcl", cols, w.reshape(C, kh * kw), optimize=True)
        ctx.cols, ctx.w = cols, w
        ctx.geom = (H, W, Ho, Wo, stride, padding, dilation)
        return out.reshape(B, C, Ho, Wo)

    @staticmethod
    def backward(ctx, g):
        H, W, Ho, Wo, stride, padding, dilation = ctx.geom
        w = ctx.w
        C, _, kh, kw = w.shape
        B = g.shape[0]
        g3 = g.reshape(B, C, Ho * Wo)
        dw = None
        if ctx.needs[1]:
            dw = np.einsum("bckl,bcl->ck", ctx.cols, g3, optimize=True).reshape(w.shape)
        dx = None
        if ctx.needs[0]:
            dcols = w.reshape(1, C, kh * kw, 1) * g3[:, :, None, :]
            dx = kernels.col2im(dcols.reshape(B, C, kh, kw, Ho, Wo), H, W, stride, padding, dilation)
        return dx, dw


_COUNT_CACHE = {}


def _pool_counts(H, W, k, stride, padding):
    key = (H, W, k, stride, padding)
    if key not in _COUNT_CACHE:
        ones = np.ones((1, 1, H, W), dtype=np.float32)
        cols = kernels.im2col(ones, k, k, stride, padding, 1)
        _COUNT_CACHE[key] = cols.sum(axis=(2, 3))[0, 0]
    return _COUNT_CACHE[key]


@register("avg_pool", 1)
class AvgPool:
    """Average pooling; padded cells are excluded from the divisor."""

    @staticmethod
    def forward(ctx, x, kernel, stride=1, padding=0):
        _pair_check("avg_pool", x)
        B, C, H, W = x.shape
        cols = kernels.im2col(x, kernel, kernel, stride, padding, 1)
        counts = _pool_counts(H, W, kernel, stride, padding)
        ctx.geom = (H, W, kernel, stride, padding, counts)
        return cols.sum(axis=(2, 3)) / counts

    @staticmethod
    def backward(ctx, g):
        H, W, k, stride, padding, counts = ctx.geom
        share = g / counts
        B, C, Ho, Wo = g.shape
        dcols = np.broadcast_to(share[:, :, None, None], (B, C, k, k, Ho, Wo))
        return (kernels.col2im(np.ascontiguousarray(dcols), H, W, stride, padding, 1),)


@register("max_pool", 1)
class MaxPool:
    @staticmethod
    def forward(ctx, x, kernel, stride=1, padding=0):
        _pair_check("max_pool", x)
        out, lin = kernels.maxpool_forward(x, kernel, stride, padding)
        ctx.lin, ctx.hw = lin, x.shape[2:]
        return out

    @staticmethod
    def backward(ctx, g):
        return (kernels.maxpool_backward(g, ctx.lin, *ctx.hw),)


@register("global_avg_pool", 1)
class GlobalAvgPool:
    @staticmethod
    def forward(ctx, x):
        _pair_check("global_avg_pool", x)
        ctx.shape = x.shape
        return x.mean(axis=(2, 3))

    @staticmethod
    def backward(ctx, g):
        B, C, H, W = ctx.shape
        return (np.broadcast_to((g / np.float32(H * W))[:, :, None, None], ctx.shape).astype(np.float32),)


@register("batch_norm", 3)
class BatchNorm:
    """Per-channel normalization over (B, H, W) with affine gamma/beta.

    With ``mean``/``var`` given the stored statistics are used instead of the
    batch statistics (evaluation mode); ``stats_out`` receives the batch
    statistics in training mode.
    """

    @staticmethod
    def forward(ctx, x, gamma, beta, eps=1e-5, mean=None, var=None, stats_out=None):
        _pair_check("batch_norm", x)
        C = x.shape[1]
        if gamma.shape != (C,) or beta.shape != (C,):
            raise ShapeError(f"batch_norm: {C} channels but gamma {gamma.shape}, beta {beta.shape}")
        ctx.eval_mode = mean is not None
        if mean is None:
            mean = x.mean(axis=(0, 2, 3), dtype=np.float64)
            var = x.var(axis=(0, 2, 3), dtype=np.float64)
            if stats_out is not None:
                stats_out["mean"] = mean.astype(np.float32)
                stats_out["var"] = var.astype(np.float32)
        inv = _f32(1.0 / np.sqrt(np.asarray(var, dtype=np.float64) + eps))
        xhat = (x - _f32(mean).reshape(1, C, 1, 1)) * inv.reshape(1, C, 1, 1)
        ctx.xhat, ctx.inv, ctx.gamma = xhat, inv, gamma
        return xhat * gamma.reshape(1, C, 1, 1) + beta.reshape(1, C, 1, 1)

    @staticmethod
    def backward(ctx, g):
        xhat, inv, gamma = ctx.xhat, ctx.inv, ctx.gamma
        C = gamma.shape[0]
        dgamma = (g * xhat).sum(axis=(0, 2, 3)) if ctx.needs[1] else None
        dbeta = g.sum(axis=(0, 2, 3)) if ctx.needs[2] else None
        dx = None
        if ctx.needs[0]:
            gx = g * gamma.reshape(1, C, 1, 1)
            if ctx.eval_mode:
                dx = gx * inv.reshape(1, C, 1, 1)
            else:
                m = gx.mean(axis=(0, 2, 3), keepdims=True)
                mx = (gx * xhat).mean(axis=(0, 2, 3), keepdims=True)
                dx = (gx - m - xhat * mx) * inv.reshape(1, C, 1, 1)
        return dx, dgamma, dbeta


# ------------------------------------------------------------------- sampling


def _centered_grid(H, W):
    v, u = np.meshgrid(
        np.arange(H, dtype=np.float32) - np.float32((H - 1) / 2),
        np.arange(W, dtype=np.float32) - np.float32((W - 1) / 2),
        indexing="ij",
    )
    return u, v


@register("affine_grid_sample", 2)
class AffineGridSample:
    """Inverse-warp ``x`` by a 2 x 3 affine map in centred pixel coordinates.

    Output pixel (row i, col j) with centred coordinates (u, v) reads the input
    at ``theta @ (u, v, 1)`` via bilinear interpolation; outside samples are 0.
    ``theta`` is 2 x 3 (shared) or B x 2 x 3.
    """

    @staticmethod
    def forward(ctx, x, theta):
        _pair_check("affine_grid_sample", x)
        B, C, H, W = x.shape
        shared = theta.shape == (2, 3)
        if not shared and theta.shape != (B, 2, 3):
            raise ShapeError(f"affine_grid_sample: theta {theta.shape} must be (2, 3) or ({B}, 2, 3)")
        th = np.broadcast_to(theta, (B, 2, 3)) if shared else theta
        u, v = _centered_grid(H, W)
        cx, cy = np.float32((W - 1) / 2), np.float32((H - 1) / 2)
        gx = th[:, 0, 0, None, None] * u + th[:, 0, 1, None, None] * v + th[:, 0, 2, None, None] + cx
        gy = th[:, 1, 0, None, None] * u + th[:, 1, 1, None, None] * v + th[:, 1, 2, None, None] + cy
        gx = np.ascontiguousarray(gx, dtype=np.float32)
        gy = np.ascontiguousarray(gy, dtype=np.float32)
        ctx.x, ctx.gx, ctx.gy, ctx.u, ctx.v, ctx.shared = x, gx, gy, u, v, shared
        return kernels.grid_sample_forward(x, gx, gy)

    @staticmethod
    def backward(ctx, g):
        dx, dgx, dgy = kernels.grid_sample_backward(
            ctx.x, ctx.gx, ctx.gy, np.ascontiguousarray(g, dtype=np.float32), bool(ctx.needs[0])
        )
        dtheta = None
        if ctx.needs[1]:
            u, v = ctx.u, ctx.v
            dtheta = np.stack(
                [
                    np.stack([(dgx * u).sum(axis=(1, 2)), (dgx * v).sum(axis=(1, 2)), dgx.sum(axis=(1, 2))], -1),
                    np.stack([(dgy * u).sum(axis=(1, 2)), (dgy * v).sum(axis=(1, 2)), dgy.sum(axis=(1, 2))], -1),
                ],
                axis=1,
            ).astype(np.float32)
            if ctx.shared:
                dtheta = dtheta.sum(axis=0)
        return (dx if ctx.needs[0] else None), dtheta


# ------------------------------------------------------------ python wrappers


def _w(kind):
    def fn(*inputs, **attrs):
        return primitive_forward(kind, inputs, **attrs)

    fn.__name__ = kind
    return fn


add = _w("add")
sub = _w("sub")
mul = _w("mul")
div = _w("div")
relu = _w("relu")
sigmoid = _w("sigmoid")
exp = _w("exp")
log = _w("log")
sin = _w("sin")
cos = _w("cos")
matmul = _w("matmul")
linear_blend = _w("linear_blend")
global_avg_pool = _w("global_avg_pool")
affine_grid_sample = _w("affine_grid_sample")


def scalar_mul(x, scalar):
    return primitive_forward("scalar_mul", (x,), scalar=scalar)


def scalar_add(x, scalar):
    return primitive_forward("scalar_add", (x,), scalar=scalar)


def clamp(x, lo, hi, inclusive=True):
    return primitive_forward("clamp", (x,), lo=lo, hi=hi, inclusive=inclusive)


def sum(x, axis=None, keepdims=False):  # noqa: A001
    return primitive_forward("sum", (x,), axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False):
    return primitive_forward("mean", (x,), axis=axis, keepdims=keepdims)


def reshape(x, shape):
    return primitive_forward("reshape", (x,), shape=tuple(shape))


def flip(x, axis):
    return primitive_forward("flip", (x,), axis=axis)


def getitem(x, index):
    return primitive_forward("getitem", (x,), index=index)


def concat(tensors, axis=0):
    return primitive_forward("concat", tuple(tensors), axis=axis)


def softmax(x, axis=-1):
    return primitive_forward("softmax", (x,), axis=axis)


def conv2d(x, w, stride=1, padding=0, dilation=1):
    return primitive_forward("conv2d", (x, w), stride=stride, padding=padding, dilation=dilation)


def depthwise_conv2d(x, w, stride=1, padding=0, dilation=1):
    return primitive_forward(
        "depthwise_conv2d", (x, w), stride=stride, padding=padding, dilation=dilation
    )


def avg_pool(x, kernel, stride=1, padding=0):
    return primitive_forward("avg_pool", (x,), kernel=kernel, stride=stride, padding=padding)


def max_pool(x, kernel, stride=1, padding=0):
    return primitive_forward("max_pool", (x,), kernel=kernel, stride=stride, padding=padding)


def batch_norm(x, gamma, beta, eps=1e-5, mean=None, var=None, stats_out=None):
    return primitive_forward(
        "batch_norm", (x, gamma, beta), eps=eps, mean=mean, var=var, stats_out=stats_out
    )
