"""Shared test helpers."""

import numpy as np

from ganwarp.tensor import Tape
from ganwarp.warp import ControlPoint, WarpSpec


def random_spec(rng, n_points=None, variant=None, max_drag=0.12):
    """A valid random warp spec with well-separated source points."""
    if n_points is None:
        n_points = int(rng.integers(3, 9))
    if variant is None:
        variant = "similarity" if rng.random() < 0.5 else "affine"
    while True:
        ps = rng.uniform(0.08, 0.92, (n_points, 2))
        d = np.hypot(ps[:, None, 0] - ps[None, :, 0], ps[:, None, 1] - ps[None, :, 1])
        np.fill_diagonal(d, 1.0)
        if d.min() < 0.03:
            continue
        if variant == "affine":
            s = np.linalg.svd(ps - ps.mean(axis=0), compute_uv=False)
            if s[1] < 0.02:
                continue
        break
    qs = np.clip(ps + rng.uniform(-max_drag, max_drag, ps.shape), -0.45, 1.45)
    pts = tuple(ControlPoint(p[0], p[1], q[0], q[1]) for p, q in zip(ps, qs))
    return WarpSpec(pts, variant=variant, alpha=2.0)


def grid_points(n=64):
    """(n*n, 2) normalized pixel-center coordinates."""
    g = (np.arange(n) + 0.5) / n
    gx, gy = np.meshgrid(g, g)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def fd_grad_check(fn, tensors, rng, eps=1e-6, samples=12):
    """Max relative error between tape gradients and central differences.

    fn must be deterministic in its inputs. Run in float64.
    """
    with Tape() as tape:
        loss = fn(*tensors)
        tape.backward(loss)
    worst = 0.0
    for t in tensors:
        if not t.requires_grad:
            continue
        g = t.grad
        assert g is not None, "missing gradient for a grad-enabled input"
        flat = t.data.reshape(-1)
        idxs = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            lp = fn(*tensors).item()
            flat[i] = orig - eps
            lm = fn(*tensors).item()
            flat[i] = orig
            num = (lp - lm) / (2 * eps)
            an = g.reshape(-1)[i]
            worst = max(worst, abs(num - an) / max(1e-8, abs(num), abs(an)))
    return worst
