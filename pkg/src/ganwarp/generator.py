"""Style-modulated synthesis network.

Eight 3x3 conv layers at resolutions 4,4,8,8,16,16,32,32 plus a final
upsample + 1x1 toRGB to 64x64. Each layer scales input channels by a
per-sample style (an affine of w), convolves, then rescales output
channels by 1/sqrt(sum of squared effective weights) -- the standard
demodulation trick expressed as activation scaling so a whole batch can
share one weight matmul. The 2-layer mapping network is frozen after
its seeded initialization; pretraining only ever optimizes synthesis
tensors.

Channel widths shrink toward the output (112 at 4x4 down to 24 at
32x32) so parameter mass sits at coarse layers and a factored update on
a fine layer stays tiny next to the full checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import ops
from .checkpoint import ModelCheckpoint
from .optim import AdamState, DivergenceError, adam_step, check_finite, lr_schedule, zero_grad
from .perceptual import default_proxy, reconstruction_loss
from .scene import SceneMapper, render_scene
from .tensor import Tape, Tensor

W_DIM = 64
Z_DIM = 64
BASE_RES = 4
IMG_RES = 64
# (cin, cout, upsample-before) per synthesis layer
LAYERS = (
    (112, 112, False),
    (112, 112, False),
    (112, 112, True),   # -> 8
    (112, 112, False),
    (112, 64, True),    # -> 16
    (64, 48, False),
    (48, 32, True),     # -> 32
    (32, 24, False),
)
N_LAYERS = len(LAYERS)
DEMOD_EPS = 1e-8

# tensors the rewrite stage may train; mapping and scene.* stay frozen
def synthesis_tensor_names():
    names = ["const", "torgb.conv", "torgb.bias"]
    for l in range(N_LAYERS):
        names += [f"layers.{l}.affine_w", f"layers.{l}.affine_b",
                  f"layers.{l}.conv", f"layers.{l}.bias"]
    return names


def conv_name(layer):
    if not 0 <= layer < N_LAYERS:
        raise ValueError(f"layer index must be in [0, {N_LAYERS}), got {layer}")
    return f"layers.{layer}.conv"


def init_checkpoint(seed=0):
    """Seeded random weights plus a fitted scene mapper."""
    rng = np.random.default_rng(seed)
    t = {}
    t["mapping.w0"] = rng.standard_normal((W_DIM, Z_DIM)) / np.sqrt(Z_DIM)
    t["mapping.b0"] = np.zeros(W_DIM)
    t["mapping.w1"] = rng.standard_normal((W_DIM, W_DIM)) / np.sqrt(W_DIM)
    t["mapping.b1"] = np.zeros(W_DIM)
    t["const"] = rng.standard_normal((LAYERS[0][0], BASE_RES, BASE_RES))
    for l, (cin, cout, _) in enumerate(LAYERS):
        t[f"layers.{l}.affine_w"] = rng.standard_normal((cin, W_DIM)) * (0.5 / np.sqrt(W_DIM))
        t[f"layers.{l}.affine_b"] = np.ones(cin)
        t[f"layers.{l}.conv"] = rng.standard_normal((cout, cin, 3, 3)) * np.sqrt(2.0 / (cin * 9))
        t[f"layers.{l}.bias"] = np.zeros(cout)
    t["torgb.conv"] = rng.standard_normal((3, LAYERS[-1][1])) / np.sqrt(LAYERS[-1][1])
    t["torgb.bias"] = np.zeros(3)
    ckpt = {k: v.astype(np.float32) for k, v in t.items()}
    # scene mapper standardized against this mapping's probe statistics
    probe_z = rng.standard_normal((1024, Z_DIM)).astype(np.float32)
    w_probe = _mapping_np(ckpt, probe_z)
    mapper = SceneMapper.fit(w_probe, seed=seed + 101)
    ckpt.update(mapper.to_tensors())
    return ModelCheckpoint(ckpt)


def _lrelu_np(x):
    return np.where(x >= 0, x, 0.2 * x)


def _mapping_np(tensors, z):
    h = _lrelu_np(z @ tensors["mapping.w0"].T + tensors["mapping.b0"])
    return _lrelu_np(h @ tensors["mapping.w1"].T + tensors["mapping.b1"])


def mapping(ckpt, z):
    """Frozen 2-layer MLP z -> w. Accepts (D,) or (N, D); plain numpy."""
    z = np.asarray(z, np.float32)
    if not np.isfinite(z).all():
        raise ValueError("latent input contains non-finite values")
    single = z.ndim == 1
    out = _mapping_np(ckpt.tensors if isinstance(ckpt, ModelCheckpoint) else ckpt,
                      z.reshape(-1, Z_DIM))
    return out[0] if single else out


def scene_mapper(ckpt) -> SceneMapper:
    return SceneMapper.from_tensors(ckpt.tensors)


def as_tensors(ckpt, trainable=()):
    """Checkpoint as Tensor dict; names in `trainable` get gradients."""
    trainable = set(trainable)
    unknown = trainable - set(ckpt.tensors)
    if unknown:
        raise KeyError(f"unknown trainable tensors: {sorted(unknown)}")
    return {name: Tensor(arr.copy() if name in trainable else arr,
                         requires_grad=name in trainable, name=name)
            for name, arr in ckpt.tensors.items()}


def synthesize(tensors, wcodes):
    """Batched synthesis. tensors: name -> Tensor; wcodes: (N, 8, W_DIM).

    Returns a (N, 3, 64, 64) Tensor in [-1, 1]. Differentiable in both
    the weights and the codes.
    """
    w = wcodes if isinstance(wcodes, Tensor) else Tensor(np.asarray(wcodes, np.float32))
    if w.data.ndim != 3 or w.data.shape[1] != N_LAYERS or w.data.shape[2] != W_DIM:
        raise ValueError(
            f"wcodes must be (N, {N_LAYERS}, {W_DIM}), got {w.data.shape}")
    n = w.data.shape[0]
    x = ops.repeat_batch(tensors["const"], n)
    for l, (cin, cout, up) in enumerate(LAYERS):
        if up:
            x = ops.upsample2x(x)
        wl = ops.index_layer(w, l)
        s = ops.add(ops.matmul(wl, tensors[f"layers.{l}.affine_w"], transpose_b=True),
                    tensors[f"layers.{l}.affine_b"])
        conv = tensors[f"layers.{l}.conv"]
        y = ops.conv3x3(ops.channel_scale(x, s), conv)
        k2 = ops.sum_axes(ops.mul(conv, conv), (2, 3))
        d = ops.rsqrt(ops.matmul(ops.mul(s, s), k2, transpose_b=True), DEMOD_EPS)
        x = ops.leaky_relu(ops.bias_add(ops.channel_scale(y, d),
                                        tensors[f"layers.{l}.bias"]))
    x = ops.upsample2x(x)
    rgb = ops.bias_add(ops.conv1x1(x, tensors["torgb.conv"]), tensors["torgb.bias"])
    return ops.tanh(rgb)


def wcodes_from_z(ckpt, z):
    """(N, 8, W_DIM) codes feeding every layer the same w = mapping(z)."""
    w = mapping(ckpt, np.asarray(z, np.float32).reshape(-1, Z_DIM))
    return np.repeat(w[:, None, :], N_LAYERS, axis=1)


def mixed_wcodes(ckpt, z_shape, z_texture, split=4):
    if not 1 <= split <= N_LAYERS - 1:
        raise ValueError(f"split must be in [1, {N_LAYERS - 1}], got {split}")
    wa = wcodes_from_z(ckpt, z_shape)
    wb = wcodes_from_z(ckpt, z_texture)
    out = wa.copy()
    out[:, split:, :] = wb[:, split:, :]
    return out


def synthesize_ckpt(ckpt, wcodes):
    """Numpy-in, numpy-out synthesis with no gradient tracking."""
    out = synthesize(as_tensors(ckpt), wcodes)
    return out.data


def style_mix(ckpt, z_shape, z_texture, split=4):
    """Image with shape from z_shape and texture/color from z_texture."""
    return synthesize_ckpt(ckpt, mixed_wcodes(ckpt, z_shape, z_texture, split))


@dataclass
class PretrainConfig:
    iters: int = 20000
    batch: int = 16
    lr: float = 1e-3
    seed: int = 0
    split: int = 4
    holdout: int = 256


@dataclass
class PretrainResult:
    checkpoint: ModelCheckpoint
    loss_trace: list
    holdout_l1: float


def _scene_target(mapper, w_shape, w_color, size=IMG_RES):
    return render_scene(mapper.params_from(w_shape, w_color), size)


def pretrain(config: PretrainConfig, progress=None) -> PretrainResult:
    """Regression-train synthesis so split-4 mixing is disentangled.

    Each batch slot draws (z_a, z_b); the target scene takes its shape
    from mapping(z_a) and colors from mapping(z_b); the network sees the
    same pair as mixed codes. iters=0 returns the seeded initial weights
    (useful for plumbing and UI tests).
    """
    ckpt = init_checkpoint(config.seed)
    rng = np.random.default_rng(config.seed + 1)
    if config.iters == 0:
        return PretrainResult(ckpt, [], _holdout_l1(ckpt, config, rng))
    trainable = synthesis_tensor_names()
    tensors = as_tensors(ckpt, trainable)
    params = {n: tensors[n] for n in trainable}
    mapper = scene_mapper(ckpt)
    state = AdamState()
    proxy = default_proxy()
    trace = []
    for it in range(config.iters):
        za = rng.standard_normal((config.batch, Z_DIM)).astype(np.float32)
        zb = rng.standard_normal((config.batch, Z_DIM)).astype(np.float32)
        wa = mapping(ckpt, za)
        wb = mapping(ckpt, zb)
        targets = np.stack([_scene_target(mapper, wa[i], wb[i])
                            for i in range(config.batch)])
        codes = np.repeat(wa[:, None, :], N_LAYERS, axis=1)
        codes[:, config.split:, :] = wb[:, None, :]
        with Tape() as tape:
            out = synthesize(tensors, codes)
            loss = ops.add(ops.l1_loss(out, Tensor(targets)),
                           proxy.distance(out, Tensor(targets)))
            lval = loss.item()
            if not np.isfinite(lval):
                raise DivergenceError(
                    f"pretraining loss became non-finite at iter {it} "
                    f"(seed {config.seed}); rerun with a different seed or lower lr")
            trace.append(lval)
            tape.backward(loss)
        adam_step(state, params, lr_schedule(config.lr, it, config.iters),
                  where=f" at iter {it}")
        zero_grad(params)
        if progress is not None and (it % 50 == 0 or it == config.iters - 1):
            progress(it, config.iters, lval)
    out_ckpt = ckpt.replace({n: params[n].data for n in trainable})
    return PretrainResult(out_ckpt, trace, _holdout_l1(out_ckpt, config, rng))


def _holdout_l1(ckpt, config, rng):
    """Mean reconstruction L1 over fresh mixed-latent holdout pairs."""
    mapper = scene_mapper(ckpt)
    total = 0.0
    count = 0
    bs = 32
    remaining = config.holdout
    while remaining > 0:
        b = min(bs, remaining)
        za = rng.standard_normal((b, Z_DIM)).astype(np.float32)
        zb = rng.standard_normal((b, Z_DIM)).astype(np.float32)
        wa = mapping(ckpt, za)
        wb = mapping(ckpt, zb)
        targets = np.stack([_scene_target(mapper, wa[i], wb[i]) for i in range(b)])
        codes = np.repeat(wa[:, None, :], N_LAYERS, axis=1)
        codes[:, config.split:, :] = wb[:, None, :]
        out = synthesize_ckpt(ckpt, codes)
        total += float(np.abs(out - targets).mean()) * b
        count += b
        remaining -= b
    return total / count


def w_average(ckpt, n=1024, seed=123):
    z = np.random.default_rng(seed).standard_normal((n, Z_DIM)).astype(np.float32)
    return mapping(ckpt, z).mean(axis=0)


@dataclass
class ProjectionResult:
    wcodes: np.ndarray        # (N_LAYERS, W_DIM)
    final_loss: float
    loss_trace: list = dc_field(default_factory=list)


def project_latent(ckpt, target, space="per-layer-w", iters=500, lr=0.05) -> ProjectionResult:
    """Optimize a latent whose synthesis matches the target image.

    single-w shares one code across layers; per-layer-w frees all 8.
    Both start from the mapping's average w so the comparison between
    spaces is equal-budget, shared-init.
    """
    if space not in ("single-w", "per-layer-w"):
        raise ValueError(f"space must be 'single-w' or 'per-layer-w', got {space!r}")
    target = np.asarray(target, np.float32)
    if target.shape != (3, IMG_RES, IMG_RES):
        raise ValueError(f"target must be (3, {IMG_RES}, {IMG_RES}), got {target.shape}")
    if not np.isfinite(target).all():
        raise ValueError("target contains non-finite values")
    tensors = as_tensors(ckpt)
    wavg = w_average(ckpt)
    if space == "single-w":
        leaf = Tensor(np.repeat(wavg[None, None, :], 1, axis=1).copy(), requires_grad=True)
    else:
        leaf = Tensor(np.repeat(wavg[None, None, :], N_LAYERS, axis=1).copy(),
                      requires_grad=True)
    params = {"w": leaf}
    state = AdamState()
    tgt = Tensor(target[None])
    trace = []
    final = None
    for it in range(iters):
        with Tape() as tape:
            codes = ops.tile_layers(leaf, N_LAYERS) if space == "single-w" else leaf
            out = synthesize(tensors, codes)
            loss = reconstruction_loss(out, tgt)
            final = loss.item()
            if not np.isfinite(final):
                raise DivergenceError(f"projection diverged at iter {it}")
            trace.append(final)
            tape.backward(loss)
        # plain half-cosine decay; the shared schedule needs longer runs
        cur_lr = lr * 0.5 * (1.0 + np.cos(np.pi * it / iters))
        adam_step(state, params, cur_lr, where=f" at iter {it}")
        zero_grad(params)
    codes = leaf.data[0]
    if space == "single-w":
        codes = np.repeat(codes, N_LAYERS, axis=0)
    return ProjectionResult(codes, final, trace)
