"""Differentiable ops used by the generator, losses, and projection.

Each op computes its numpy result eagerly and registers a backward
closure with the active tape (see tensor.py). Convolutions go through
im2col + BLAS matmul; the unfold/fold scatter work lives in the kernel
backend.
"""

import numpy as np

from .backend import kernels
from .tensor import Tensor, as_tensor, record


def _unbroadcast(g, shape):
    # reduce a broadcasted gradient back to the original operand shape
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)

    def bwd(g):
        return (_unbroadcast(g, a.data.shape) if a.requires_grad else None,
                _unbroadcast(g, b.data.shape) if b.requires_grad else None)

    return record(out, (a, b), bwd)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)

    def bwd(g):
        return (_unbroadcast(g, a.data.shape) if a.requires_grad else None,
                -_unbroadcast(g, b.data.shape) if b.requires_grad else None)

    return record(out, (a, b), bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)

    def bwd(g):
        return (_unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None)

    return record(out, (a, b), bwd)


def scale(a, c):
    """Multiply by a python scalar without promoting the dtype."""
    a = as_tensor(a)
    c = a.data.dtype.type(c)
    out = Tensor(a.data * c)

    def bwd(g):
        return (g * c,)

    return record(out, (a,), bwd)


def matmul(a, b, transpose_b=False):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    bm = b.data.T if transpose_b else b.data
    out = Tensor(a.data @ bm)

    def bwd(g):
        da = g @ bm.T if a.requires_grad else None
        db = None
        if b.requires_grad:
            db = a.data.T @ g
            if transpose_b:
                db = db.T
        return da, db

    return record(out, (a, b), bwd)


def reshape(t, shape):
    t = as_tensor(t)
    out = Tensor(t.data.reshape(shape))

    def bwd(g):
        return (g.reshape(t.data.shape),)

    return record(out, (t,), bwd)


def leaky_relu(t, slope=0.2):
    t = as_tensor(t)
    s = t.data.dtype.type(slope)
    out = Tensor(np.where(t.data >= 0, t.data, t.data * s))

    def bwd(g):
        return (np.where(t.data >= 0, g, g * s),)

    return record(out, (t,), bwd)


def tanh(t):
    t = as_tensor(t)
    y = np.tanh(t.data)
    out = Tensor(y)

    def bwd(g):
        return (g * (1 - y * y),)

    return record(out, (t,), bwd)


def rsqrt(t, eps=1e-8):
    """1 / sqrt(x + eps), the demodulation nonlinearity."""
    t = as_tensor(t)
    y = 1.0 / np.sqrt(t.data + t.data.dtype.type(eps))
    out = Tensor(y.astype(t.data.dtype, copy=False))

    def bwd(g):
        return (g * (-0.5) * out.data * out.data * out.data,)

    return record(out, (t,), bwd)


def sum_axes(t, axes, keepdims=False):
    t = as_tensor(t)
    axes = tuple(axes) if isinstance(axes, (tuple, list)) else (axes,)
    out = Tensor(t.data.sum(axis=axes, keepdims=keepdims))

    def bwd(g):
        if not keepdims:
            for ax in sorted(axes):
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, t.data.shape),)

    return record(out, (t,), bwd)


def sum_all(t):
    t = as_tensor(t)
    out = Tensor(np.asarray(t.data.sum()))

    def bwd(g):
        return (np.full(t.data.shape, g, t.data.dtype),)

    return record(out, (t,), bwd)


def mean_all(t):
    t = as_tensor(t)
    out = Tensor(np.asarray(t.data.mean()))
    inv = 1.0 / t.data.size

    def bwd(g):
        return (np.full(t.data.shape, g * inv, t.data.dtype),)

    return record(out, (t,), bwd)


def conv3x3(x, w):
    """3x3 conv, stride 1, zero pad 1. x: (N,Ci,H,W), w: (Co,Ci,3,3)."""
    x, w = as_tensor(x), as_tensor(w)
    n, ci, h, wd = x.data.shape
    co = w.data.shape[0]
    xpad = np.zeros((n, ci, h + 2, wd + 2), x.data.dtype)
    xpad[:, :, 1:-1, 1:-1] = x.data
    cols = np.empty((ci * 9, n * h * wd), x.data.dtype)
    kernels.im2col3(xpad, cols)
    wm = np.ascontiguousarray(w.data.reshape(co, ci * 9))
    y = (wm @ cols).reshape(co, n, h, wd)
    out = Tensor(np.ascontiguousarray(y.transpose(1, 0, 2, 3)))

    def bwd(g):
        gm = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(co, n * h * wd)
        dw = (gm @ cols.T).reshape(w.data.shape) if w.requires_grad else None
        dx = None
        if x.requires_grad:
            dx = kernels.col2im3(wm.T @ gm, n, ci, h, wd)
        return dx, dw

    return record(out, (x, w), bwd)


def conv1x1(x, w):
    """Pointwise conv. x: (N,Ci,H,W), w: (Co,Ci)."""
    x, w = as_tensor(x), as_tensor(w)
    n, ci, h, wd = x.data.shape
    co = w.data.shape[0]
    xm = np.ascontiguousarray(x.data.transpose(1, 0, 2, 3)).reshape(ci, n * h * wd)
    y = (w.data @ xm).reshape(co, n, h, wd)
    out = Tensor(np.ascontiguousarray(y.transpose(1, 0, 2, 3)))

    def bwd(g):
        gm = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(co, n * h * wd)
        dw = gm @ xm.T if w.requires_grad else None
        dx = None
        if x.requires_grad:
            dx = (w.data.T @ gm).reshape(ci, n, h, wd)
            dx = np.ascontiguousarray(dx.transpose(1, 0, 2, 3))
        return dx, dw

    return record(out, (x, w), bwd)


def channel_scale(x, s):
    """Per-sample per-channel scaling. x: (N,C,H,W), s: (N,C)."""
    x, s = as_tensor(x), as_tensor(s)
    out = Tensor(x.data * s.data[:, :, None, None])

    def bwd(g):
        dx = g * s.data[:, :, None, None] if x.requires_grad else None
        ds = (g * x.data).sum(axis=(2, 3)) if s.requires_grad else None
        return dx, ds

    return record(out, (x, s), bwd)


def bias_add(x, b):
    """Channel bias for NCHW maps."""
    x, b = as_tensor(x), as_tensor(b)
    out = Tensor(x.data + b.data[None, :, None, None])

    def bwd(g):
        return (g if x.requires_grad else None,
                g.sum(axis=(0, 2, 3)) if b.requires_grad else None)

    return record(out, (x, b), bwd)


def upsample2x(x):
    x = as_tensor(x)
    out = Tensor(kernels.upsample2(np.ascontiguousarray(x.data)))

    def bwd(g):
        return (kernels.upsample2_back(np.ascontiguousarray(g)),)

    return record(out, (x,), bwd)


def avg_pool2x(x):
    x = as_tensor(x)
    out = Tensor(kernels.avgpool2(np.ascontiguousarray(x.data)))

    def bwd(g):
        return (kernels.avgpool2_back(np.ascontiguousarray(g)),)

    return record(out, (x,), bwd)


def repeat_batch(t, n):
    """Tile a (C, H, W) tensor into an (N, C, H, W) batch."""
    t = as_tensor(t)
    out = Tensor(np.broadcast_to(t.data[None], (n,) + t.data.shape).copy())

    def bwd(g):
        return (g.sum(axis=0),)

    return record(out, (t,), bwd)


def index_layer(t, j):
    """Select per-layer styles: (N, L, D) -> (N, D) at layer j."""
    t = as_tensor(t)
    out = Tensor(t.data[:, j].copy())

    def bwd(g):
        full = np.zeros_like(t.data)
        full[:, j] = g
        return (full,)

    return record(out, (t,), bwd)


def tile_layers(t, layers):
    """Broadcast a single style (N, 1, D) across all layers."""
    t = as_tensor(t)
    if t.data.ndim != 3 or t.data.shape[1] != 1:
        raise ValueError(f"tile_layers expects (N, 1, D), got {t.data.shape}")
    out = Tensor(np.repeat(t.data, layers, axis=1))

    def bwd(g):
        return (g.sum(axis=1, keepdims=True),)

    return record(out, (t,), bwd)


def abs_val(t):
    t = as_tensor(t)
    out = Tensor(np.abs(t.data))

    def bwd(g):
        return (g * np.sign(t.data).astype(t.data.dtype, copy=False),)

    return record(out, (t,), bwd)


def l1_loss(a, b):
    a, b = as_tensor(a), as_tensor(b)
    d = a.data - b.data
    out = Tensor(np.asarray(np.abs(d).mean()))
    inv = 1.0 / d.size

    def bwd(g):
        s = np.sign(d) * (g * inv)
        return s.astype(a.data.dtype, copy=False), (-s).astype(b.data.dtype, copy=False)

    return record(out, (a, b), bwd)


def mse_loss(a, b):
    a, b = as_tensor(a), as_tensor(b)
    d = a.data - b.data
    out = Tensor(np.asarray((d * d).mean()))
    inv = 2.0 / d.size

    def bwd(g):
        s = d * (g * inv)
        return s.astype(a.data.dtype, copy=False), (-s).astype(b.data.dtype, copy=False)

    return record(out, (a, b), bwd)
