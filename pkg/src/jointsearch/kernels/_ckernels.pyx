# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_npkernels.py`` (same signatures, same results)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, INFINITY

cnp.import_array()

NAME = "cython"


def conv_out_size(Py_ssize_t size, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t dil):
    return (size + 2 * pad - dil * (k - 1) - 1) // stride + 1


def im2col(x, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad,
           Py_ssize_t dil, float pad_value=0.0):
    cdef const float[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float32)
    cdef Py_ssize_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    cdef Py_ssize_t Ho = conv_out_size(H, kh, stride, pad, dil)
    cdef Py_ssize_t Wo = conv_out_size(W, kw, stride, pad, dil)
    out = np.empty((B, C, kh, kw, Ho, Wo), dtype=np.float32)
    cdef float[:, :, :, :, :, ::1] ov = out
    cdef Py_ssize_t b, c, i, j, oh, ow, r, q
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        for oh in range(Ho):
                            r = oh * stride - pad + i * dil
                            for ow in range(Wo):
                                q = ow * stride - pad + j * dil
                                if r >= 0 and r < H and q >= 0 and q < W:
                                    ov[b, c, i, j, oh, ow] = xv[b, c, r, q]
                                else:
                                    ov[b, c, i, j, oh, ow] = pad_value
    return out


def col2im(cols, Py_ssize_t H, Py_ssize_t W, Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t dil):
    cdef const float[:, :, :, :, :, ::1] cv = np.ascontiguousarray(cols, dtype=np.float32)
    cdef Py_ssize_t B = cv.shape[0], C = cv.shape[1], kh = cv.shape[2], kw = cv.shape[3]
    cdef Py_ssize_t Ho = cv.shape[4], Wo = cv.shape[5]
    out = np.zeros((B, C, H, W), dtype=np.float32)
    cdef float[:, :, :, ::1] ov = out
    cdef Py_ssize_t b, c, i, j, oh, ow, r, q
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        for oh in range(Ho):
                            r = oh * stride - pad + i * dil
                            if r < 0 or r >= H:
                                continue
                            for ow in range(Wo):
                                q = ow * stride - pad + j * dil
                                if q >= 0 and q < W:
                                    ov[b, c, r, q] += cv[b, c, i, j, oh, ow]
    return out


def maxpool_forward(x, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    cdef const float[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float32)
    cdef Py_ssize_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    cdef Py_ssize_t Ho = conv_out_size(H, k, stride, pad, 1)
    cdef Py_ssize_t Wo = conv_out_size(W, k, stride, pad, 1)
    out = np.empty((B, C, Ho, Wo), dtype=np.float32)
    lin = np.empty((B, C, Ho, Wo), dtype=np.int64)
    cdef float[:, :, :, ::1] ov = out
    cdef cnp.int64_t[:, :, :, ::1] lv = lin
    cdef Py_ssize_t b, c, oh, ow, i, j, r, q, best_idx
    cdef float best, v
    with nogil:
        for b in range(B):
            for c in range(C):
                for oh in range(Ho):
                    for ow in range(Wo):
                        best = -INFINITY
                        best_idx = -1
                        # row-major window scan: strict > keeps the lowest linear index on ties
                        for i in range(k):
                            r = oh * stride - pad + i
                            for j in range(k):
                                q = ow * stride - pad + j
                                if r >= 0 and r < H and q >= 0 and q < W:
                                    v = xv[b, c, r, q]
                                    if best_idx < 0 or v > best:
                                        best = v
                                        best_idx = r * W + q
                        ov[b, c, oh, ow] = best
                        lv[b, c, oh, ow] = best_idx
    return out, lin


def maxpool_backward(grad, lin, Py_ssize_t H, Py_ssize_t W):
    cdef const float[:, :, :, ::1] gv = np.ascontiguousarray(grad, dtype=np.float32)
    cdef const cnp.int64_t[:, :, :, ::1] lv = np.ascontiguousarray(lin, dtype=np.int64)
    cdef Py_ssize_t B = gv.shape[0], C = gv.shape[1], Ho = gv.shape[2], Wo = gv.shape[3]
    out = np.zeros((B, C, H, W), dtype=np.float32)
    cdef float[:, :, :, ::1] ov = out
    cdef Py_ssize_t b, c, oh, ow, idx
    with nogil:
        for b in range(B):
            for c in range(C):
                for oh in range(Ho):
                    for ow in range(Wo):
                        idx = lv[b, c, oh, ow]
                        if idx >= 0:
                            ov[b, c, idx // W, idx % W] += gv[b, c, oh, ow]
    return out


def grid_sample_forward(x, gx, gy):
    cdef const float[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float32)
    cdef const float[:, :, ::1] gxv = np.ascontiguousarray(gx, dtype=np.float32)
    cdef const float[:, :, ::1] gyv = np.ascontiguousarray(gy, dtype=np.float32)
    cdef Py_ssize_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    cdef Py_ssize_t Ho = gxv.shape[1], Wo = gxv.shape[2]
    out = np.zeros((B, C, Ho, Wo), dtype=np.float32)
    cdef float[:, :, :, ::1] ov = out
    cdef Py_ssize_t b, c, i, j, x0, y0
    cdef float fx, fy, wx1, wy1, wx0, wy0, acc
    cdef bint in00, in01, in10, in11
    with nogil:
        for b in range(B):
            for i in range(Ho):
                for j in range(Wo):
                    fx = floor(gxv[b, i, j])
                    fy = floor(gyv[b, i, j])
                    wx1 = gxv[b, i, j] - fx
                    wy1 = gyv[b, i, j] - fy
                    wx0 = 1.0 - wx1
                    wy0 = 1.0 - wy1
                    x0 = <Py_ssize_t>fx
                    y0 = <Py_ssize_t>fy
                    in00 = y0 >= 0 and y0 < H and x0 >= 0 and x0 < W
                    in01 = y0 >= 0 and y0 < H and x0 + 1 >= 0 and x0 + 1 < W
                    in10 = y0 + 1 >= 0 and y0 + 1 < H and x0 >= 0 and x0 < W
                    in11 = y0 + 1 >= 0 and y0 + 1 < H and x0 + 1 >= 0 and x0 + 1 < W
                    for c in range(C):
                        acc = 0.0
                        if in00:
                            acc = acc + wy0 * wx0 * xv[b, c, y0, x0]
                        if in01:
                            acc = acc + wy0 * wx1 * xv[b, c, y0, x0 + 1]
                        if in10:
                            acc = acc + wy1 * wx0 * xv[b, c, y0 + 1, x0]
                        if in11:
                            acc = acc + wy1 * wx1 * xv[b, c, y0 + 1, x0 + 1]
                        ov[b, c, i, j] = acc
    return out


def grid_sample_backward(x, gx, gy, grad, bint need_x):
    cdef const float[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float32)
    cdef const float[:, :, ::1] gxv = np.ascontiguousarray(gx, dtype=np.float32)
    cdef const float[:, :, ::1] gyv = np.ascontiguousarray(gy, dtype=np.float32)
    cdef const float[:, :, :, ::1] gv = np.ascontiguousarray(grad, dtype=np.float32)
    cdef Py_ssize_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    cdef Py_ssize_t Ho = gxv.shape[1], Wo = gxv.shape[2]
    dgx = np.zeros((B, Ho, Wo), dtype=np.float32)
    dgy = np.zeros((B, Ho, Wo), dtype=np.float32)
    dx = np.zeros((B, C, H, W), dtype=np.float32) if need_x else np.zeros((1, 1, 1, 1), dtype=np.float32)
    cdef float[:, :, ::1] dgxv = dgx
    cdef float[:, :, ::1] dgyv = dgy
    cdef float[:, :, :, ::1] dxv = dx
    cdef Py_ssize_t b, c, i, j, x0, y0
    cdef float fx, fy, wx1, wy1, wx0, wy0, g, v00, v01, v10, v11, sx, sy
    cdef bint in00, in01, in10, in11
    with nogil:
        for b in range(B):
            for i in range(Ho):
                for j in range(Wo):
                    fx = floor(gxv[b, i, j])
                    fy = floor(gyv[b, i, j])
                    wx1 = gxv[b, i, j] - fx
                    wy1 = gyv[b, i, j] - fy
                    wx0 = 1.0 - wx1
                    wy0 = 1.0 - wy1
                    x0 = <Py_ssize_t>fx
                    y0 = <Py_ssize_t>fy
                    in00 = y0 >= 0 and y0 < H and x0 >= 0 and x0 < W
                    in01 = y0 >= 0 and y0 < H and x0 + 1 >= 0 and x0 + 1 < W
                    in10 = y0 + 1 >= 0 and y0 + 1 < H and x0 >= 0 and x0 < W
                    in11 = y0 + 1 >= 0 and y0 + 1 < H and x0 + 1 >= 0 and x0 + 1 < W
                    sx = 0.0
                    sy = 0.0
                    for c in range(C):
                        g = gv[b, c, i, j]
                        v00 = xv[b, c, y0, x0] if in00 else 0.0
                        v01 = xv[b, c, y0, x0 + 1] if in01 else 0.0
                        v10 = xv[b, c, y0 + 1, x0] if in10 else 0.0
                        v11 = xv[b, c, y0 + 1, x0 + 1] if in11 else 0.0
                        sx = sx + g * (wy0 * (v01 - v00) + wy1 * (v11 - v10))
                        sy = sy + g * (wx0 * (v10 - v00) + wx1 * (v11 - v01))
                        if need_x:
                            if in00:
                                dxv[b, c, y0, x0] += g * wy0 * wx0
                            if in01:
                                dxv[b, c, y0, x0 + 1] += g * wy0 * wx1
                            if in10:
                                dxv[b, c, y0 + 1, x0] += g * wy1 * wx0
                            if in11:
                                dxv[b, c, y0 + 1, x0 + 1] += g * wy1 * wx1
                    dgxv[b, i, j] = sx
                    dgyv[b, i, j] = sy
    return (dx if need_x else None), dgx, dgy
