"""Tiny module system and the candidate cell operations."""

import numpy as np

from ..autodiff import primitives as P
from ..autodiff.tensor import Tensor, parameter


class Module:
    """Parameters are Tensor attributes; children are Module attributes or lists
    of Modules. Iteration follows attribute insertion order."""

    buffer_names = ()
    mode = "train"

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name in self.buffer_names:
            yield prefix + name, getattr(self, name)
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def set_mode(self, mode):
        """``train``: batch statistics, running averages updated; ``search``: batch
        statistics, running averages frozen; ``eval``: running averages."""
        if mode not in ("train", "search", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        for _, child in self._children():
            child.set_mode(mode)

    def requires_grad_(self, flag):
        for t in self.parameters():
            t.requires_grad = flag
        return self

    def __call__(self, *args):
        return self.forward(*args)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Conv(Module):
    def __init__(self, c_in, c_out, k, rng, stride=1, padding=0, dilation=1):
        self.weight = parameter(_uniform(rng, (c_out, c_in, k, k), c_in * k * k))
        self.stride, self.padding, self.dilation = stride, padding, dilation

    def forward(self, x):
        # parameters are looked up freshly: requires_grad may be toggled between uses
        return P.conv2d(x, self.weight, self.stride, self.padding, self.dilation)


class DepthwiseConv(Module):
    def __init__(self, c, k, rng, stride=1, padding=0, dilation=1):
        self.weight = parameter(_uniform(rng, (c, 1, k, k), k * k))
        self.stride, self.padding, self.dilation = stride, padding, dilation

    def forward(self, x):
        return P.depthwise_conv2d(x, self.weight, self.stride, self.padding, self.dilation)


class BatchNorm(Module):
    buffer_names = ("running_mean", "running_var")
    momentum = 0.1

    def __init__(self, c):
        self.gamma = parameter(np.ones(c, np.float32))
        self.beta = parameter(np.zeros(c, np.float32))
        self.running_mean = np.zeros(c, np.float32)
        self.running_var = np.ones(c, np.float32)

    def forward(self, x):
        if self.mode == "eval":
            return P.batch_norm(x, self.gamma, self.beta, mean=self.running_mean, var=self.running_var)
        stats = {} if self.mode == "train" else None
        out = P.batch_norm(x, self.gamma, self.beta, stats_out=stats)
        if stats:
            m = np.float32(self.momentum)
            n = x.shape[0] * x.shape[2] * x.shape[3]
            unbiased = stats["var"] * np.float32(n / max(n - 1, 1))
            self.running_mean[:] = (1 - m) * self.running_mean + m * stats["mean"]
            self.running_var[:] = (1 - m) * self.running_var + m * unbiased
        return out


class Linear(Module):
    def __init__(self, c_in, c_out, rng):
        self.weight = parameter(_uniform(rng, (c_in, c_out), c_in))
        self.bias = parameter(np.zeros(c_out, np.float32))

    def forward(self, x):
        return P.matmul(x, self.weight) + self.bias


class ReLUConvBN(Module):
    def __init__(self, c_in, c_out, k, rng, stride=1, padding=0):
        self.conv = Conv(c_in, c_out, k, rng, stride, padding)
        self.bn = BatchNorm(c_out)

    def forward(self, x):
        return self.bn(self.conv(x.relu()))


class SepConv(Module):
    """Two stacked relu / depthwise / pointwise / BN blocks."""

    def __init__(self, c_in, c_out, k, rng, stride=1):
        pad = k // 2
        self.dw1 = DepthwiseConv(c_in, k, rng, stride, pad)
        self.pw1 = Conv(c_in, c_in, 1, rng)
        self.bn1 = BatchNorm(c_in)
        self.dw2 = DepthwiseConv(c_in, k, rng, 1, pad)
        self.pw2 = Conv(c_in, c_out, 1, rng)
        self.bn2 = BatchNorm(c_out)

    def forward(self, x):
        x = self.bn1(self.pw1(self.dw1(x.relu())))
        return self.bn2(self.pw2(self.dw2(x.relu())))


class DilConv(Module):
    def __init__(self, c_in, c_out, k, rng, stride=1, dilation=2):
        self.dw = DepthwiseConv(c_in, k, rng, stride, dilation * (k // 2), dilation)
        self.pw = Conv(c_in, c_out, 1, rng)
        self.bn = BatchNorm(c_out)

    def forward(self, x):
        return self.bn(self.pw(self.dw(x.relu())))


class Pool(Module):
    def __init__(self, kind, c, stride):
        self.kind, self.stride = kind, stride
        self.bn = BatchNorm(c)

    def forward(self, x):
        pool = P.max_pool if self.kind == "max" else P.avg_pool
        return self.bn(pool(x, 3, self.stride, 1))


class Identity(Module):
    def forward(self, x):
        return x


class Zero(Module):
    def __init__(self, stride):
        self.stride = stride

    def forward(self, x):
        B, C, H, W = x.shape
        s = self.stride
        return Tensor(np.zeros((B, C, -(-H // s), -(-W // s)), np.float32))


class FactorizedReduce(Module):
    """Halve H and W with two offset stride-2 1x1 convs, concatenated."""

    def __init__(self, c_in, c_out, rng):
        if c_out % 2:
            raise ValueError(f"FactorizedReduce needs an even channel count, got {c_out}")
        self.conv1 = Conv(c_in, c_out // 2, 1, rng, stride=2)
        self.conv2 = Conv(c_in, c_out // 2, 1, rng, stride=2)
        self.bn = BatchNorm(c_out)

    def forward(self, x):
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise ValueError(f"FactorizedReduce needs even spatial size, got {x.shape[2:]}")
        x = x.relu()
        shifted = P.getitem(x, (slice(None), slice(None), slice(1, None), slice(1, None)))
        return self.bn(P.concat([self.conv1(x), self.conv2(shifted)], 1))


def _skip(c, stride, rng):
    return Identity() if stride == 1 else FactorizedReduce(c, c, rng)


OP_FACTORIES = {
    "zero": lambda c, stride, rng: Zero(stride),
    "identity": _skip,
    "sep_conv_3x3": lambda c, stride, rng: SepConv(c, c, 3, rng, stride),
    "sep_conv_5x5": lambda c, stride, rng: SepConv(c, c, 5, rng, stride),
    "dil_conv_3x3": lambda c, stride, rng: DilConv(c, c, 3, rng, stride),
    "dil_conv_5x5": lambda c, stride, rng: DilConv(c, c, 5, rng, stride),
    "max_pool_3x3": lambda c, stride, rng: Pool("max", c, stride),
    "avg_pool_3x3": lambda c, stride, rng: Pool("avg", c, stride),
}
DEFAULT_ARCH_OPS = ("zero", "identity", "sep_conv_3x3", "max_pool_3x3", "avg_pool_3x3")
FULL_ARCH_OPS = (
    "zero", "identity", "sep_conv_3x3", "sep_conv_5x5",
    "dil_conv_3x3", "dil_conv_5x5", "max_pool_3x3", "avg_pool_3x3",
)


def make_op(name, c, stride, rng):
    try:
        factory = OP_FACTORIES[name]
    except KeyError:
        raise KeyError(f"unknown cell op {name!r}; known: {', '.join(OP_FACTORIES)}") from None
    return factory(c, stride, rng)
