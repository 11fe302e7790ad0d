"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. Set ``GAZELIFT_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np
import torch

from . import _kernels_py

if os.environ.get("GAZELIFT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def get_backend(name=None):
    """Return a kernel module by name ("compiled" / "python"), or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _contig(a):
    return np.ascontiguousarray(a)


def bilinear_sample(value, loc, backend=None):
    """Sample ``value`` (B, H, W, C) at normalized points ``loc`` (B, P, 2).

    Points use pixel-center convention: pixel ``i`` sits at ``(i + 0.5) / W``.
    Out-of-grid points are clamped to the border.
    """
    impl = get_backend(backend)
    value = _contig(value)
    return impl.bilinear_sample(value, _contig(loc.astype(value.dtype, copy=False)))


def bilinear_sample_backward(value, loc, grad_out, need_value_grad=True, backend=None):
    impl = get_backend(backend)
    value = _contig(value)
    return impl.bilinear_sample_backward(
        value, _contig(loc.astype(value.dtype, copy=False)),
        _contig(grad_out.astype(value.dtype, copy=False)), need_value_grad)


def render_splats(out, splats, backend=None):
    """Add truncated gaussian splats into ``out`` (B, H, W, C) in place."""
    impl = get_backend(backend)
    splats = _contig(np.asarray(splats, dtype=out.dtype).reshape(-1, 6))
    return impl.render_splats(out, splats)


class BilinearSampleFunction(torch.autograd.Function):
    """Autograd wrapper around the active bilinear sampling kernel."""

    @staticmethod
    def forward(ctx, value, loc):
        ctx.save_for_backward(value, loc)
        out = bilinear_sample(value.detach().cpu().numpy(), loc.detach().cpu().numpy())
        return torch.from_numpy(out).to(value.device)

    @staticmethod
    def backward(ctx, grad_out):
        value, loc = ctx.saved_tensors
        need_value = ctx.needs_input_grad[0]
        gv, gl = bilinear_sample_backward(
            value.detach().cpu().numpy(), loc.detach().cpu().numpy(),
            grad_out.detach().cpu().numpy(), need_value_grad=need_value)
        gv = torch.from_numpy(gv).to(value.device) if need_value else None
        gl = torch.from_numpy(gl).to(loc.device) if ctx.needs_input_grad[1] else None
        return gv, gl


def sample_features(value, loc):
    """Differentiable bilinear sampling for torch tensors (B, H, W, C) x (B, P, 2)."""
    return BilinearSampleFunction.apply(value, loc.to(value.dtype))
