"""Gradient and optimizer checks against independent numerics."""

import numpy as np
import pytest

from ganwarp import ops
from ganwarp.optim import AdamState, DivergenceError, adam_step, lr_schedule
from ganwarp.tensor import Tape, Tensor

from support import fd_grad_check

rng = np.random.default_rng(20260824)


def T(*shape, grad=True):
    return Tensor(rng.standard_normal(shape), requires_grad=grad)


def C(*shape):
    return Tensor(rng.standard_normal(shape))


K_UP = C(2, 3, 8, 8)
K_POOL = C(2, 3, 2, 2)
K_TILE = C(2, 4, 5)
K_REP = C(3, 2, 4, 4)
K_RESH = C(6, 4)
K_ZERO = Tensor(np.zeros((2, 3, 6, 6)))

CASES = [
    ("elementwise", lambda a, b: ops.mean_all(ops.mul(ops.add(a, b), ops.scale(a, 0.7))), lambda: [T(4, 5), T(4, 5)]),
    ("broadcast_add", lambda a, b: ops.sum_all(ops.add(a, b)), lambda: [T(4, 5), T(5)]),
    ("broadcast_mul", lambda a, b: ops.mean_all(ops.mul(a, b)), lambda: [T(2, 3, 4, 4), T(2, 1, 4, 4)]),
    ("sub", lambda a, b: ops.mean_all(ops.mul(ops.sub(a, b), ops.sub(a, b))), lambda: [T(4, 5), T(4, 5)]),
    ("matmul", lambda a, b: ops.mean_all(ops.matmul(a, b)), lambda: [T(3, 4), T(4, 5)]),
    ("matmul_t", lambda a, b: ops.mean_all(ops.matmul(a, b, transpose_b=True)), lambda: [T(3, 4), T(5, 4)]),
    ("conv3x3", lambda x, w: ops.mean_all(ops.conv3x3(x, w)), lambda: [T(2, 3, 5, 6), T(4, 3, 3, 3)]),
    ("conv1x1", lambda x, w: ops.mean_all(ops.conv1x1(x, w)), lambda: [T(2, 3, 5, 6), T(4, 3)]),
    ("channel_scale", lambda x, s: ops.mean_all(ops.channel_scale(x, s)), lambda: [T(2, 3, 4, 4), T(2, 3)]),
    ("bias_add", lambda x, b: ops.mean_all(ops.mul(ops.bias_add(x, b), x)), lambda: [T(2, 3, 4, 4), T(3)]),
    ("leaky_relu", lambda x: ops.mean_all(ops.leaky_relu(x)), lambda: [T(4, 7)]),
    ("tanh", lambda x: ops.sum_all(ops.tanh(x)), lambda: [T(4, 7)]),
    ("rsqrt", lambda x: ops.mean_all(ops.rsqrt(ops.mul(x, x), 1e-4)), lambda: [T(4, 7)]),
    ("sum_axes", lambda x: ops.mean_all(ops.mul(ops.sum_axes(x, (1,), keepdims=True), x)), lambda: [T(3, 4, 5)]),
    ("upsample2x", lambda x: ops.mean_all(ops.mul(ops.upsample2x(x), K_UP)), lambda: [T(2, 3, 4, 4)]),
    ("avg_pool2x", lambda x: ops.mean_all(ops.mul(ops.avg_pool2x(x), K_POOL)), lambda: [T(2, 3, 4, 4)]),
    ("repeat_batch", lambda x: ops.mean_all(ops.mul(ops.repeat_batch(x, 3), K_REP)), lambda: [T(2, 4, 4)]),
    ("index_layer", lambda x: ops.mean_all(ops.mul(ops.index_layer(x, 1), ops.index_layer(x, 2))), lambda: [T(2, 4, 5)]),
    ("tile_layers", lambda x: ops.mean_all(ops.mul(ops.tile_layers(x, 4), K_TILE)), lambda: [T(2, 1, 5)]),
    ("reshape", lambda x: ops.mean_all(ops.mul(ops.reshape(x, (6, 4)), K_RESH)), lambda: [T(2, 3, 4)]),
    ("abs_val", lambda x: ops.mean_all(ops.abs_val(x)), lambda: [T(4, 7)]),
    ("l1_loss", lambda a, b: ops.l1_loss(a, b), lambda: [T(3, 4), T(3, 4)]),
    ("mse_loss", lambda a, b: ops.mse_loss(a, b), lambda: [T(3, 4), T(3, 4)]),
    ("deep_chain",
     lambda x, w1, w2, s: ops.l1_loss(
         ops.tanh(ops.conv3x3(ops.leaky_relu(ops.channel_scale(ops.conv3x3(x, w1), s)), w2)), K_ZERO),
     lambda: [T(2, 3, 6, 6), T(5, 3, 3, 3), T(3, 5, 3, 3), T(2, 5)]),
]


@pytest.mark.parametrize("name,fn,make", CASES, ids=[c[0] for c in CASES])
def test_gradients_match_finite_differences(name, fn, make):
    err = fd_grad_check(fn, make(), rng)
    assert err < 1e-2, f"{name}: rel err {err:.3e}"
    # in practice these should be far tighter than the contract bound
    assert err < 1e-5, f"{name}: rel err {err:.3e} suspiciously large"


def test_tensor_reused_twice_accumulates():
    a = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    with Tape() as tape:
        out = ops.mean_all(ops.mul(a, a))
        tape.backward(out)
    assert np.allclose(a.grad, 2 * a.data / 9, atol=1e-12)


def test_no_tape_means_no_graph():
    a = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    out = ops.mul(a, a)
    assert out.requires_grad  # flag propagates
    tape = Tape()
    assert len(tape) == 0


def test_backward_requires_scalar():
    a = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    with Tape() as tape:
        out = ops.mul(a, a)
        with pytest.raises(ValueError):
            tape.backward(out)


def test_constants_get_no_grad():
    a = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    c = Tensor(rng.standard_normal((3, 3)))
    with Tape() as tape:
        out = ops.mean_all(ops.mul(a, c))
        tape.backward(out)
    assert a.grad is not None
    assert c.grad is None


def test_operator_sugar_matches_functions():
    a = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    with Tape() as tape:
        out = ops.mean_all((a + b) * a - b)
        tape.backward(out)
    assert a.grad is not None and b.grad is not None


def test_adam_matches_hand_rollout():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    st = AdamState()
    m = np.zeros(2)
    v = np.zeros(2)
    ref = p.data.copy()
    for t in range(1, 6):
        g = np.array([0.5, -1.0]) * t
        p.grad = g.copy()
        adam_step(st, {"p": p}, 0.1)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert np.allclose(p.data, ref, atol=1e-12), f"step {t} diverged from reference"


def test_adam_rejects_nonfinite_gradient():
    p = Tensor(np.ones(3), requires_grad=True)
    p.grad = np.array([0.0, np.nan, 1.0])
    with pytest.raises(DivergenceError, match="non-finite"):
        adam_step(AdamState(), {"p": p}, 0.1)


def test_adam_rejects_missing_gradient():
    p = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="no gradient"):
        adam_step(AdamState(), {"p": p}, 0.1)


def test_lr_schedule_shape():
    base = 0.05
    assert lr_schedule(base, 0, 2000) == 0.0
    assert lr_schedule(base, 50, 2000) == pytest.approx(base * 0.5)
    assert lr_schedule(base, 100, 2000) == pytest.approx(base)
    assert lr_schedule(base, 999, 2000) == pytest.approx(base)  # last flat iter
    assert lr_schedule(base, 1500, 2000) == pytest.approx(base * 0.5)  # cosine midpoint
    assert lr_schedule(base, 1999, 2000) < 1e-5 * base
    # monotone through the decay tail
    tail = [lr_schedule(base, i, 2000) for i in range(1000, 2000)]
    assert all(a >= b for a, b in zip(tail, tail[1:]))


def test_lr_schedule_rejects_short_runs():
    with pytest.raises(ValueError):
        lr_schedule(0.05, 0, 1100)
    with pytest.raises(ValueError):
        lr_schedule(0.05, 0, 500)
    with pytest.raises(ValueError):
        lr_schedule(0.05, 2000, 2000)


def test_float32_stays_float32():
    a = Tensor(rng.standard_normal((4, 4)).astype(np.float32), requires_grad=True)
    w = Tensor(rng.standard_normal((4, 4)).astype(np.float32), requires_grad=True)
    with Tape() as tape:
        out = ops.mse_loss(ops.tanh(ops.matmul(a, w)), Tensor(np.zeros((4, 4), np.float32)))
        tape.backward(out)
    assert a.grad.dtype == np.float32
    assert w.grad.dtype == np.float32
