"""Adam with bias correction, plus the shared learning-rate schedule."""

import numpy as np


class DivergenceError(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


def check_finite(arr, what):
    # one fused pass; only pinpoint with a full isfinite scan on failure
    if not np.isfinite(float(np.sum(arr, dtype=np.float64))):
        bad = int((~np.isfinite(arr)).sum())
        raise DivergenceError(
            f"{what} has {bad} non-finite values; lower the learning rate or "
            f"change the random seed and rerun")


class AdamState:
    """First/second moment buffers keyed by parameter name."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0


def zero_grad(params):
    for p in params.values():
        p.grad = None


def adam_step(state, params, lr, where=""):
    """One update over a dict of name -> Tensor. Mutates params in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = p.grad
        if g is None:
            raise ValueError(f"parameter {name!r} has no gradient{where}")
        check_finite(g, f"gradient of {name!r}{where}")
        g = np.asarray(g, dtype=p.data.dtype)
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def lr_schedule(base_lr, iteration, total_iters):
    """Linear warmup over 100 iters, flat middle, cosine decay over the last 1000.

    Rejects totals that leave no flat region.
    """
    if total_iters <= 1100:
        raise ValueError(f"total_iters must exceed 1100, got {total_iters}")
    if not 0 <= iteration < total_iters:
        raise ValueError(f"iteration {iteration} outside [0, {total_iters})")
    warm = min(1.0, iteration / 100.0)
    into_decay = max(0, iteration - (total_iters - 1000))
    decay = 0.5 * (1.0 + np.cos(np.pi * into_decay / 1000.0))
    return base_lr * warm * decay
