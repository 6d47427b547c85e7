"""Deterministic perceptual distance from a fixed random feature pyramid.

Three conv levels (16 channels each, 3x3, leaky-ReLU 0.2, 2x average
pooling between levels) with seed-pinned weights; features are
unit-normalized along channels per position. The distance is the mean
squared feature difference summed over levels. reconstruction_loss adds
a 0.1-weighted pixel L1 term. No pretrained network is involved, so the
whole loss is reproducible from the seed alone.
"""

import numpy as np

from . import ops
from .backend import kernels
from .tensor import Tensor, as_tensor

PYRAMID_SEED = 613
_LEVELS = 3
_CH = 16


class PerceptualProxy:
    def __init__(self, seed=PYRAMID_SEED):
        rng = np.random.default_rng(seed)
        self.weights = []
        cin = 3
        for _ in range(_LEVELS):
            std = np.sqrt(2.0 / (cin * 9))
            w = rng.standard_normal((_CH, cin, 3, 3)) * std
            self.weights.append(w.astype(np.float32))
            cin = _CH

    def _w(self, i, dtype):
        w = self.weights[i]
        return Tensor(w if dtype == np.float32 else w.astype(dtype))

    def features(self, x):
        """Normalized features per level for an NCHW tensor."""
        x = as_tensor(x)
        feats = []
        h = x
        for i in range(_LEVELS):
            if i > 0:
                h = ops.avg_pool2x(h)
            h = ops.leaky_relu(ops.conv3x3(h, self._w(i, x.dtype)))
            norm = ops.rsqrt(ops.sum_axes(ops.mul(h, h), 1, keepdims=True), 1e-8)
            feats.append(ops.mul(h, norm))
        return feats

    def distance(self, a, b, mask=None):
        """Scalar Tensor; mask is an optional (H, W) weight map."""
        a, b = _as_batch(a), _as_batch(b)
        if a.shape != b.shape:
            raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
        masks = _mask_pyramid(mask, a.shape, a.dtype) if mask is not None else None
        fa = self.features(a)
        fb = self.features(b)
        total = None
        for i, (xa, xb) in enumerate(zip(fa, fb)):
            d = ops.sub(xa, xb)
            sq = ops.mul(d, d)
            if masks is None:
                term = ops.mean_all(sq)
            else:
                m = masks[i]
                denom = float(m.data.sum()) * xa.shape[0] * xa.shape[1]
                term = ops.scale(ops.sum_all(ops.mul(sq, m)), 1.0 / denom)
            total = term if total is None else ops.add(total, term)
        return total


_DEFAULT = None


def default_proxy():
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = PerceptualProxy()
    return _DEFAULT


def _as_batch(x):
    x = as_tensor(x)
    if x.data.ndim == 3:
        return ops.reshape(x, (1,) + x.data.shape)
    if x.data.ndim != 4:
        raise ValueError(f"expected CHW or NCHW image, got shape {x.data.shape}")
    return x


def _mask_pyramid(mask, shape, dtype):
    m = np.asarray(mask, np.float32)
    if m.shape != shape[2:]:
        raise ValueError(f"mask shape {m.shape} does not match image {shape[2:]}")
    if m.sum() == 0:
        raise ValueError("mask selects no pixels")
    levels = [Tensor(m[None, None].astype(dtype))]
    cur = m[None, None].astype(dtype)
    for _ in range(_LEVELS - 1):
        cur = kernels.avgpool2(np.ascontiguousarray(cur))
        levels.append(Tensor(cur))
    return levels


def reconstruction_loss(output, target, mask=None, proxy=None):
    """Perceptual proxy + 0.1 * pixel L1, optionally mask-restricted."""
    proxy = proxy or default_proxy()
    a, b = _as_batch(output), _as_batch(target)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    perc = proxy.distance(a, b, mask)
    if mask is None:
        pix = ops.l1_loss(a, b)
    else:
        m = _mask_pyramid(mask, a.shape, a.dtype)[0]
        denom = float(m.data.sum()) * a.shape[0] * a.shape[1]
        pix = ops.scale(ops.sum_all(ops.mul(ops.abs_val(ops.sub(a, b)), m)), 1.0 / denom)
    return ops.add(perc, ops.scale(pix, 0.1))
