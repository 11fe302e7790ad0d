"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Used when the extension is not built. Every function here has the same
signature and numerical semantics as its compiled counterpart.
"""

import numpy as np


def _corners(loc, H, W):
    x = loc[..., 0] * W - 0.5
    y = loc[..., 1] * H - 0.5
    x_in = (x >= 0) & (x <= W - 1)
    y_in = (y >= 0) & (y <= H - 1)
    x = np.clip(x, 0, W - 1)
    y = np.clip(y, 0, H - 1)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    wx = (x - x0).astype(loc.dtype)
    wy = (y - y0).astype(loc.dtype)
    return x0, x1, y0, y1, wx, wy, x_in, y_in


def bilinear_sample(value, loc):
    B, H, W, C = value.shape
    x0, x1, y0, y1, wx, wy, _, _ = _corners(loc, H, W)
    b = np.arange(B)[:, None]
    wx = wx[..., None]
    wy = wy[..., None]
    out = ((1 - wx) * (1 - wy) * value[b, y0, x0] + wx * (1 - wy) * value[b, y0, x1]
           + (1 - wx) * wy * value[b, y1, x0] + wx * wy * value[b, y1, x1])
    return np.ascontiguousarray(out, dtype=value.dtype)


def bilinear_sample_backward(value, loc, grad_out, need_value_grad=True):
    B, H, W, C = value.shape
    x0, x1, y0, y1, wx, wy, x_in, y_in = _corners(loc, H, W)
    b = np.arange(B)[:, None]
    v00 = value[b, y0, x0]
    v01 = value[b, y0, x1]
    v10 = value[b, y1, x0]
    v11 = value[b, y1, x1]
    wxe = wx[..., None]
    wye = wy[..., None]
    gx = (grad_out * ((1 - wye) * (v01 - v00) + wye * (v11 - v10))).sum(-1)
    gy = (grad_out * ((1 - wxe) * (v10 - v00) + wxe * (v11 - v01))).sum(-1)
    grad_loc = np.zeros(loc.shape, dtype=value.dtype)
    grad_loc[..., 0] = np.where(x_in, gx * W, 0)
    grad_loc[..., 1] = np.where(y_in, gy * H, 0)
    grad_value = None
    if need_value_grad:
        grad_value = np.zeros_like(value)
        bb = np.broadcast_to(b, x0.shape)
        for yy, xx, w in ((y0, x0, (1 - wxe) * (1 - wye)), (y0, x1, wxe * (1 - wye)),
                          (y1, x0, (1 - wxe) * wye), (y1, x1, wxe * wye)):
            np.add.at(grad_value, (bb, yy, xx), grad_out * w)
    return grad_value, grad_loc


def render_splats(out, splats):
    B, H, W, C = out.shape
    if len(splats) == 0:
        return out
    jj = np.arange(H, dtype=out.dtype)
    ii = np.arange(W, dtype=out.dtype)
    for b, c, u, v, sig, amp in splats:
        cx = u * W - 0.5
        cy = v * H - 0.5
        r = 3 * sig
        dx = ii - cx
        dy = jj - cy
        gx = np.where(np.abs(dx) <= r, np.exp(-dx * dx / (2 * sig * sig)), 0)
        gy = np.where(np.abs(dy) <= r, np.exp(-dy * dy / (2 * sig * sig)), 0)
        out[int(b), :, :, int(c)] += amp * gy[:, None] * gx[None, :]
    return out
