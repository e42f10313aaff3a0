"""Pure-numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Inputs are C-contiguous float32 arrays; outputs are freshly allocated.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

NAME = "numpy"


def conv_out_size(size, k, stride, pad, dil):
    return (size + 2 * pad - dil * (k - 1) - 1) // stride + 1


def im2col(x, kh, kw, stride, pad, dil, pad_value=0.0):
    """Unfold ``x`` (B, C, H, W) into patches of shape (B, C, kh, kw, Ho, Wo)."""
    B, C, H, W = x.shape
    Ho = conv_out_size(H, kh, stride, pad, dil)
    Wo = conv_out_size(W, kw, stride, pad, dil)
    if pad:
        xp = np.full((B, C, H + 2 * pad, W + 2 * pad), pad_value, dtype=np.float32)
        xp[:, :, pad:pad + H, pad:pad + W] = x
    else:
        xp = np.ascontiguousarray(x, dtype=np.float32)
    sB, sC, sH, sW = xp.strides
    view = as_strided(
        xp,
        shape=(B, C, kh, kw, Ho, Wo),
        strides=(sB, sC, dil * sH, dil * sW, stride * sH, stride * sW),
        writeable=False,
    )
    return np.ascontiguousarray(view)


def col2im(cols, H, W, stride, pad, dil):
    """Adjoint of :func:`im2col`: scatter-add patches back onto a (B, C, H, W) image."""
    B, C, kh, kw, Ho, Wo = cols.shape
    Hp, Wp = H + 2 * pad, W + 2 * pad
    out = np.zeros((B, C, Hp, Wp), dtype=np.float32)
    for i in range(kh):
        r0 = i * dil
        r1 = r0 + stride * (Ho - 1) + 1
        for j in range(kw):
            c0 = j * dil
            c1 = c0 + stride * (Wo - 1) + 1
            out[:, :, r0:r1:stride, c0:c1:stride] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad:pad + H, pad:pad + W]
    return np.ascontiguousarray(out)


def maxpool_forward(x, k, stride, pad):
    """Max pooling with -inf padding.

    Returns the pooled values and, per output cell, the linear index (into H*W)
    of the winning input element. Ties go to the lowest linear index.
    """
    B, C, H, W = x.shape
    cols = im2col(x, k, k, stride, pad, 1, pad_value=-np.inf)
    Ho, Wo = cols.shape[-2:]
    cols = cols.reshape(B, C, k * k, Ho, Wo)
    win = np.argmax(cols, axis=2)
    out = np.take_along_axis(cols, win[:, :, None], axis=2)[:, :, 0]
    di, dj = np.divmod(win, k)
    rows = np.arange(Ho)[:, None] * stride - pad + di
    cols_ = np.arange(Wo)[None, :] * stride - pad + dj
    lin = (rows * W + cols_).astype(np.int64)
    return np.ascontiguousarray(out, dtype=np.float32), lin


def maxpool_backward(grad, lin, H, W):
    B, C = grad.shape[:2]
    offsets = (np.arange(B * C, dtype=np.int64) * (H * W)).reshape(B, C, 1, 1)
    flat = np.bincount(
        (lin + offsets).ravel(), weights=grad.ravel().astype(np.float64), minlength=B * C * H * W
    )
    return flat.reshape(B, C, H, W).astype(np.float32)


def _corners(x, gx, gy):
    B, C, H, W = x.shape
    x0 = np.floor(gx)
    y0 = np.floor(gy)
    wx1 = (gx - x0).astype(np.float32)
    wy1 = (gy - y0).astype(np.float32)
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    xt = x.transpose(0, 2, 3, 1).reshape(B * H * W, C)
    base = (np.arange(B, dtype=np.int64) * (H * W)).reshape(B, 1, 1)
    corners = []
    for dy in (0, 1):
        for dx in (0, 1):
            yy = y0 + dy
            xx = x0 + dx
            valid = (yy >= 0) & (yy < H) & (xx >= 0) & (xx < W)
            idx = base + np.clip(yy, 0, H - 1) * W + np.clip(xx, 0, W - 1)
            val = xt[idx] * valid[..., None]
            corners.append((idx, valid, val))
    return wx1, wy1, corners, xt.shape


def grid_sample_forward(x, gx, gy):
    """Bilinear sampling of ``x`` at pixel coordinates (gx=column, gy=row), zero outside."""
    wx1, wy1, corners, _ = _corners(x, gx, gy)
    wx0 = 1.0 - wx1
    wy0 = 1.0 - wy1
    weights = (wy0 * wx0, wy0 * wx1, wy1 * wx0, wy1 * wx1)
    out = sum(w[..., None] * c[2] for w, c in zip(weights, corners))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2), dtype=np.float32)


def grid_sample_backward(x, gx, gy, grad, need_x):
    """Return (dx or None, dgx, dgy) for :func:`grid_sample_forward`."""
    B, C, H, W = x.shape
    wx1, wy1, corners, flat_shape = _corners(x, gx, gy)
    wx0 = 1.0 - wx1
    wy0 = 1.0 - wy1
    g = grad.transpose(0, 2, 3, 1)
    v00, v01, v10, v11 = (c[2] for c in corners)
    dgx = np.sum(g * (wy0[..., None] * (v01 - v00) + wy1[..., None] * (v11 - v10)), axis=-1)
    dgy = np.sum(g * (wx0[..., None] * (v10 - v00) + wx1[..., None] * (v11 - v01)), axis=-1)
    dx = None
    if need_x:
        weights = (wy0 * wx0, wy0 * wx1, wy1 * wx0, wy1 * wx1)
        acc = np.zeros(flat_shape, dtype=np.float64)
        n = flat_shape[0]
        for w, (idx, valid, _) in zip(weights, corners):
            contrib = g * (w * valid)[..., None]
            for c in range(C):
                acc[:, c] += np.bincount(idx.ravel(), weights=contrib[..., c].ravel(), minlength=n)
        dx = np.ascontiguousarray(
            acc.reshape(B, H, W, C).transpose(0, 3, 1, 2), dtype=np.float32
        )
    return dx, dgx.astype(np.float32), dgy.astype(np.float32)
