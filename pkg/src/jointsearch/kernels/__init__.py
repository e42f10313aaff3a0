"""Hot numerical kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; set ``JOINTSEARCH_PURE_PYTHON=1``
to force the numpy implementation (both produce the same results to float32
rounding).
"""

import os

from . import _npkernels

numpy_backend = _npkernels
compiled_backend = None

if not os.environ.get("JOINTSEARCH_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else numpy_backend
BACKEND = backend.NAME

conv_out_size = _npkernels.conv_out_size


def im2col(x, kh, kw, stride, pad, dil, pad_value=0.0):
    return backend.im2col(x, kh, kw, stride, pad, dil, pad_value)


def col2im(cols, H, W, stride, pad, dil):
    return backend.col2im(cols, H, W, stride, pad, dil)


def maxpool_forward(x, k, stride, pad):
    return backend.maxpool_forward(x, k, stride, pad)


def maxpool_backward(grad, lin, H, W):
    return backend.maxpool_backward(grad, lin, H, W)


def grid_sample_forward(x, gx, gy):
    return backend.grid_sample_forward(x, gx, gy)


def grid_sample_backward(x, gx, gy, grad, need_x):
    return backend.grid_sample_backward(x, gx, gy, grad, need_x)
