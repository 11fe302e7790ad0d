# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: bilinear sampling of channel-last feature grids and
gaussian splat rendering. Semantics match ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, exp

cnp.import_array()

ctypedef fused real:
    float
    double


def bilinear_sample(real[:, :, :, ::1] value, real[:, :, ::1] loc):
    cdef Py_ssize_t B = value.shape[0], H = value.shape[1], W = value.shape[2], C = value.shape[3]
    cdef Py_ssize_t P = loc.shape[1]
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((B, P, C), dtype=dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, p, c, x0, x1, y0, y1
    cdef real x, y, wx, wy, w00, w01, w10, w11
    with nogil:
        for b in range(B):
            for p in range(P):
                x = loc[b, p, 0] * W - 0.5
                y = loc[b, p, 1] * H - 0.5
                if x < 0:
                    x = 0
                elif x > W - 1:
                    x = W - 1
                if y < 0:
                    y = 0
                elif y > H - 1:
                    y = H - 1
                x0 = <Py_ssize_t>floor(x)
                y0 = <Py_ssize_t>floor(y)
                x1 = x0 + 1 if x0 + 1 < W else W - 1
                y1 = y0 + 1 if y0 + 1 < H else H - 1
                wx = x - x0
                wy = y - y0
                w00 = (1 - wx) * (1 - wy)
                w01 = wx * (1 - wy)
                w10 = (1 - wx) * wy
                w11 = wx * wy
                for c in range(C):
                    out[b, p, c] = (w00 * value[b, y0, x0, c] + w01 * value[b, y0, x1, c]
                                    + w10 * value[b, y1, x0, c] + w11 * value[b, y1, x1, c])
    return out_arr


def bilinear_sample_backward(real[:, :, :, ::1] value, real[:, :, ::1] loc,
                             real[:, :, ::1] grad_out, bint need_value_grad=True):
    cdef Py_ssize_t B = value.shape[0], H = value.shape[1], W = value.shape[2], C = value.shape[3]
    cdef Py_ssize_t P = loc.shape[1]
    dtype = np.float32 if real is float else np.float64
    grad_loc_arr = np.zeros((B, P, 2), dtype=dtype)
    cdef real[:, :, ::1] grad_loc = grad_loc_arr
    grad_value_arr = None
    cdef real[:, :, :, ::1] grad_value
    if need_value_grad:
        grad_value_arr = np.zeros((B, H, W, C), dtype=dtype)
        grad_value = grad_value_arr
    cdef Py_ssize_t b, p, c, x0, x1, y0, y1
    cdef real x, y, wx, wy, g, gx, gy, v00, v01, v10, v11
    cdef bint x_in, y_in
    with nogil:
        for b in range(B):
            for p in range(P):
                x = loc[b, p, 0] * W - 0.5
                y = loc[b, p, 1] * H - 0.5
                x_in = x >= 0 and x <= W - 1
                y_in = y >= 0 and y <= H - 1
                if x < 0:
                    x = 0
                elif x > W - 1:
                    x = W - 1
                if y < 0:
                    y = 0
                elif y > H - 1:
                    y = H - 1
                x0 = <Py_ssize_t>floor(x)
                y0 = <Py_ssize_t>floor(y)
                x1 = x0 + 1 if x0 + 1 < W else W - 1
                y1 = y0 + 1 if y0 + 1 < H else H - 1
                wx = x - x0
                wy = y - y0
                gx = 0
                gy = 0
                for c in range(C):
                    g = grad_out[b, p, c]
                    v00 = value[b, y0, x0, c]
                    v01 = value[b, y0, x1, c]
                    v10 = value[b, y1, x0, c]
                    v11 = value[b, y1, x1, c]
                    gx = gx + g * ((1 - wy) * (v01 - v00) + wy * (v11 - v10))
                    gy = gy + g * ((1 - wx) * (v10 - v00) + wx * (v11 - v01))
                    if need_value_grad:
                        grad_value[b, y0, x0, c] += g * (1 - wx) * (1 - wy)
                        grad_value[b, y0, x1, c] += g * wx * (1 - wy)
                        grad_value[b, y1, x0, c] += g * (1 - wx) * wy
                        grad_value[b, y1, x1, c] += g * wx * wy
                if x_in:
                    grad_loc[b, p, 0] = gx * W
                if y_in:
                    grad_loc[b, p, 1] = gy * H
    return grad_value_arr, grad_loc_arr


def render_splats(real[:, :, :, ::1] out, real[:, ::1] splats):
    """Accumulate truncated gaussians into ``out`` (B, H, W, C) in place.

    Each splat row is ``(batch, channel, u, v, sigma_px, amplitude)``; pixels
    farther than three sigma along either axis are skipped.
    """
    cdef Py_ssize_t H = out.shape[1], W = out.shape[2]
    cdef Py_ssize_t n = splats.shape[0]
    cdef Py_ssize_t s, b, c, i, j, i_lo, i_hi, j_lo, j_hi
    cdef real cx, cy, sig, amp, r, dx, dy, inv
    with nogil:
        for s in range(n):
            b = <Py_ssize_t>splats[s, 0]
            c = <Py_ssize_t>splats[s, 1]
            cx = splats[s, 2] * W - 0.5
            cy = splats[s, 3] * H - 0.5
            sig = splats[s, 4]
            amp = splats[s, 5]
            r = 3 * sig
            inv = 1 / (2 * sig * sig)
            i_lo = <Py_ssize_t>ceil(cx - r)
            i_hi = <Py_ssize_t>floor(cx + r)
            j_lo = <Py_ssize_t>ceil(cy - r)
            j_hi = <Py_ssize_t>floor(cy + r)
            if i_lo < 0:
                i_lo = 0
            if j_lo < 0:
                j_lo = 0
            if i_hi > W - 1:
                i_hi = W - 1
            if j_hi > H - 1:
                j_hi = H - 1
            for j in range(j_lo, j_hi + 1):
                dy = j - cy
                for i in range(i_lo, i_hi + 1):
                    dx = i - cx
                    out[b, j, i, c] += amp * exp(-(dx * dx + dy * dy) * inv)
    return out
