"""Tensor and define-by-run tape for reverse-mode differentiation."""

import threading
from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    """Input shapes are incompatible with an operation."""


class TapeError(RuntimeError):
    """Misuse of the differentiation tape (frozen tape, foreign tensor, ...)."""


class UnknownOpError(KeyError):
    pass


class Node:
    __slots__ = ("kind", "parents", "backward", "visits")

    def __init__(self, kind, parents, backward):
        self.kind = kind
        self.parents = parents
        self.backward = backward
        self.visits = 0


class Tape:
    """Append-only record of differentiable operations.

    Append order is a topological order. A tape is frozen by its first
    backward sweep; recording onto or sweeping a frozen tape is an error.
    Use as a context manager to make it the current tape of this thread.
    """

    def __init__(self):
        self.nodes = []
        self.frozen = False

    def __len__(self):
        return len(self.nodes)

    def record(self, kind, parents, backward):
        if self.frozen:
            raise TapeError(f"cannot record '{kind}' on a frozen tape (backward already ran)")
        for p in parents:
            if p.node is not None and p.tape is not self:
                raise TapeError(f"'{kind}' received a tensor recorded on a different tape")
        self.nodes.append(Node(kind, parents, backward))
        return len(self.nodes) - 1

    def __enter__(self):
        _local().stack.append(self)
        return self

    def __exit__(self, *exc):
        _local().stack.pop()
        return False


class _State(threading.local):
    def __init__(self):
        self.stack = []
        self.default = Tape()
        self.grad_enabled = True
        self.backward_calls = 0


_state = _State()


def _local():
    return _state


def current_tape():
    st = _local()
    if st.stack:
        return st.stack[-1]
    if st.default.frozen:
        st.default = Tape()
    return st.default


def is_grad_enabled():
    return _local().grad_enabled


@contextmanager
def no_grad():
    st = _local()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


def backward_calls():
    """Number of backward sweeps run on this thread."""
    return _local().backward_calls


class Tensor:
    """float32 n-d array that can take part in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "node", "tape", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        data = np.asarray(data, dtype=np.float32)
        # ascontiguousarray would promote 0-d arrays to shape (1,)
        self.data = data if data.flags.c_contiguous else data.copy()
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node = None
        self.tape = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def detach(self):
        return Tensor(self.data)

    @property
    def is_leaf(self):
        return self.node is None

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __len__(self):
        return self.shape[0]

    # arithmetic
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return _P.scalar_add(self, other)
        return _P.add(self, other)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return _P.scalar_add(self, -other)
        return _P.sub(self, other)

    def __rsub__(self, other):
        if isinstance(other, (int, float)):
            return _P.scalar_add(_P.scalar_mul(self, -1.0), other)
        return _P.sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return _P.scalar_mul(self, other)
        return _P.mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return _P.scalar_mul(self, 1.0 / other)
        return _P.div(self, other)

    def __neg__(self):
        return _P.scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return _P.matmul(self, other)

    def __getitem__(self, index):
        return _P.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return _P.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return _P.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _P.reshape(self, shape)

    def relu(self):
        return _P.relu(self)

    def sigmoid(self):
        return _P.sigmoid(self)

    def exp(self):
        return _P.exp(self)

    def log(self):
        return _P.log(self)

    def clamp(self, lo, hi, inclusive=True):
        return _P.clamp(self, lo, hi, inclusive=inclusive)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


class Gradients(dict):
    """Leaf tensor -> gradient array; leaves outside the graph read as zeros."""

    def __missing__(self, key):
        return np.zeros(key.shape, dtype=np.float32)


def backward(loss):
    """Run one reverse sweep from scalar ``loss``.

    Accumulates into ``.grad`` of every reachable leaf with ``requires_grad``
    and returns the leaf gradients. Freezes the tape.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads_out = Gradients()
    st = _local()
    if loss.node is None:
        st.backward_calls += 1
        return grads_out
    tape = loss.tape
    if tape.frozen:
        raise TapeError("backward called twice on the same tape")
    pending = {loss.node: np.ones(loss.shape, dtype=np.float32)}
    leaves = {}
    nodes = tape.nodes
    for nid in range(loss.node, -1, -1):
        node = nodes[nid]
        node.visits += 1
        g = pending.pop(nid, None)
        if g is None:
            continue
        parent_grads = node.backward(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise ShapeError(
                    f"'{node.kind}' backward produced shape {pg.shape} for input {parent.shape}"
                )
            if parent.node is not None:
                prev = pending.get(parent.node)
                pending[parent.node] = pg if prev is None else prev + pg
            else:
                key = id(parent)
                if key in leaves:
                    leaves[key][1] = leaves[key][1] + pg
                else:
                    leaves[key] = [parent, pg]
    tape.frozen = True
    # drop saved contexts and parent links: frees activations and breaks the
    # tape -> node -> tensor -> tape cycle without waiting for the collector
    for node in nodes:
        node.backward = None
        node.parents = ()
    st.backward_calls += 1
    for leaf, g in leaves.values():
        g = g.astype(np.float32, copy=False)
        leaf.grad = g if leaf.grad is None else leaf.grad + g
        grads_out[leaf] = g
    return grads_out


from . import primitives as _P  # noqa: E402
