"""Deformation correctness: closed-form reproduction, locality, resampling."""

import numpy as np
import pytest

from ganwarp.warp import (ControlPoint, DeformationField, WarpSpec,
                          build_inverse_field, mls_map, mls_map_many,
                          warp_image)
from ganwarp.tensor import Tensor

from support import grid_points, random_spec

rng = np.random.default_rng(99)
GRID = grid_points(64)


def spec_with(points, **kw):
    return WarpSpec(tuple(ControlPoint(*p) for p in points), **kw)


def test_identity_reproduction_over_random_specs():
    for _ in range(100):
        s = random_spec(rng)
        ident = WarpSpec(tuple(ControlPoint(p.px, p.py, p.px, p.py) for p in s.points),
                         variant=s.variant, alpha=s.alpha)
        out = mls_map_many(ident, GRID)
        assert np.abs(out - GRID).max() < 1e-6


def test_interpolation_exact_at_handles():
    for _ in range(100):
        s = random_spec(rng)
        got = mls_map_many(s, s.source_array())
        assert np.array_equal(got, s.target_array()), "coincidence rule must be exact"


def test_translation_reproduction():
    for _ in range(100):
        s = random_spec(rng)
        t = rng.uniform(-0.2, 0.2, 2)
        ps = s.source_array()
        moved = WarpSpec(tuple(ControlPoint(p[0], p[1], p[0] + t[0], p[1] + t[1]) for p in ps),
                         variant=s.variant, alpha=s.alpha)
        out = mls_map_many(moved, GRID)
        assert np.abs(out - (GRID + t)).max() < 1e-5


def test_affine_reproduction():
    for _ in range(100):
        s = random_spec(rng, variant="affine")
        a = np.eye(2) + rng.uniform(-0.3, 0.3, (2, 2))
        t = rng.uniform(-0.1, 0.1, 2)
        ps = s.source_array()
        qs = ps @ a + t
        moved = WarpSpec(tuple(ControlPoint(p[0], p[1], q[0], q[1]) for p, q in zip(ps, qs)),
                         variant="affine", alpha=s.alpha)
        out = mls_map_many(moved, GRID)
        assert np.abs(out - (GRID @ a + t)).max() < 1e-5


def test_mls_map_single_point():
    s = random_spec(rng)
    fx, fy = mls_map(s, (0.5, 0.5))
    many = mls_map_many(s, np.array([[0.5, 0.5]]))
    assert (fx, fy) == (many[0, 0], many[0, 1])


def test_variant_minimum_points():
    one = spec_with([(0.3, 0.3, 0.4, 0.4)])
    with pytest.raises(ValueError, match="at least 2"):
        mls_map_many(one, GRID[:4])
    two = spec_with([(0.3, 0.3, 0.4, 0.4), (0.7, 0.7, 0.7, 0.7)], variant="affine")
    with pytest.raises(ValueError, match="at least 3"):
        mls_map_many(two, GRID[:4])
    collinear = spec_with([(0.2, 0.2, 0.25, 0.2), (0.5, 0.5, 0.5, 0.5),
                           (0.8, 0.8, 0.8, 0.8)], variant="affine")
    with pytest.raises(ValueError, match="non-collinear"):
        mls_map_many(collinear, GRID[:4])
    # same three points are fine for similarity
    sim = spec_with([(0.2, 0.2, 0.25, 0.2), (0.5, 0.5, 0.5, 0.5),
                     (0.8, 0.8, 0.8, 0.8)])
    mls_map_many(sim, GRID[:4])


def test_spec_validation():
    with pytest.raises(ValueError, match="1..64"):
        spec_with([(0.1, 0.1, 0.1, 0.1)] * 65)
    with pytest.raises(ValueError, match="coincide"):
        spec_with([(0.3, 0.3, 0.4, 0.4), (0.3, 0.3 + 1e-8, 0.2, 0.2)])
    with pytest.raises(ValueError, match="outside"):
        spec_with([(2.0, 0.3, 0.4, 0.4), (0.7, 0.7, 0.7, 0.7)])
    with pytest.raises(ValueError, match="non-finite"):
        spec_with([(float("nan"), 0.3, 0.4, 0.4), (0.7, 0.7, 0.7, 0.7)])
    with pytest.raises(ValueError, match="variant"):
        spec_with([(0.3, 0.3, 0.4, 0.4), (0.7, 0.7, 0.7, 0.7)], variant="rigid")
    with pytest.raises(ValueError, match="alpha"):
        spec_with([(0.3, 0.3, 0.4, 0.4), (0.7, 0.7, 0.7, 0.7)], alpha=-1.0)


def test_json_round_trip():
    s = random_spec(rng)
    s2 = WarpSpec.from_json(s.to_json())
    assert s2 == s
    with pytest.raises(ValueError, match="object"):
        WarpSpec.from_json([1, 2])
    with pytest.raises(ValueError, match="malformed"):
        WarpSpec.from_json({"points": [{"px": 0.1}]})


def test_identity_field_is_exact_and_warp_is_noop():
    f = DeformationField.identity(64, 64)
    ys, xs = np.meshgrid(np.arange(64.0), np.arange(64.0), indexing="ij")
    assert np.array_equal(f.flow[:, :, 0], ys)
    assert np.array_equal(f.flow[:, :, 1], xs)
    img = rng.uniform(-1, 1, (3, 64, 64)).astype(np.float32)
    assert np.array_equal(warp_image(img, f), img)


def test_identity_spec_builds_near_identity_field():
    s = random_spec(rng)
    ident = WarpSpec(tuple(ControlPoint(p.px, p.py, p.px, p.py) for p in s.points),
                     variant=s.variant)
    f = build_inverse_field(ident, 64, 64)
    ref = DeformationField.identity(64, 64)
    assert np.abs(f.flow - ref.flow).max() < 1e-4  # 1e-6 in normalized units


def test_inverse_field_of_translation():
    t = np.array([0.11, -0.06])
    ps = np.array([[0.2, 0.3], [0.7, 0.4], [0.5, 0.8]])
    s = WarpSpec(tuple(ControlPoint(p[0], p[1], p[0] + t[0], p[1] + t[1]) for p in ps))
    f = build_inverse_field(s, 64, 64)
    ref = DeformationField.identity(64, 64)
    # output pixel x samples from x - t (pixel units; y carries t[1], x carries t[0])
    assert np.abs(f.flow[:, :, 0] - (ref.flow[:, :, 0] - t[1] * 64)).max() < 1e-3
    assert np.abs(f.flow[:, :, 1] - (ref.flow[:, :, 1] - t[0] * 64)).max() < 1e-3


def test_integer_pixel_shift():
    # shift right by exactly one pixel; border column clamps
    t = 1.0 / 32
    ps = np.array([[0.25, 0.25], [0.75, 0.25], [0.5, 0.75]])
    s = WarpSpec(tuple(ControlPoint(p[0], p[1], p[0] + t, p[1]) for p in ps))
    f = build_inverse_field(s, 32, 32)
    img = rng.uniform(-1, 1, (3, 32, 32)).astype(np.float32)
    out = warp_image(img, f)
    assert np.allclose(out[:, :, 1:], img[:, :, :-1], atol=1e-4)
    assert np.allclose(out[:, :, 0], img[:, :, 0], atol=1e-4)


def test_locality_of_anchored_stretch():
    # tangential stretch of the top edge, pinned at four corners: the far
    # field (distance > 0.4 from every handle) barely moves
    pts = [(0.42, 0.30, 0.36, 0.26),
           (0.50, 0.27, 0.50, 0.27),
           (0.58, 0.30, 0.64, 0.26),
           (0.08, 0.08, 0.08, 0.08),
           (0.92, 0.08, 0.92, 0.08),
           (0.08, 0.92, 0.08, 0.92),
           (0.92, 0.92, 0.92, 0.92)]
    s = spec_with(pts, variant="affine", alpha=2.5)
    out = mls_map_many(s, GRID)
    disp = np.hypot(out[:, 0] - GRID[:, 0], out[:, 1] - GRID[:, 1])
    ps = s.source_array()
    dmin = np.min(np.hypot(GRID[:, 0, None] - ps[None, :, 0],
                           GRID[:, 1, None] - ps[None, :, 1]), axis=1)
    far = dmin > 0.4
    assert far.sum() > 50, "oracle region must not be vacuous"
    assert disp[far].max() < 0.10 * disp.max()


def _smooth_image(n=64):
    g = (np.arange(n) + 0.5) / n
    gx, gy = np.meshgrid(g, g)
    img = np.stack([
        np.sin(2 * np.pi * gx),
        np.cos(2 * np.pi * gy),
        np.exp(-((gx - 0.5) ** 2 + (gy - 0.5) ** 2) / 0.08) * 2 - 1,
    ]).astype(np.float32)
    return np.clip(img, -1, 1)


def test_round_trip_small_warp():
    pts = [(0.35, 0.35, 0.38, 0.33), (0.65, 0.35, 0.63, 0.37),
           (0.5, 0.7, 0.5, 0.73), (0.1, 0.1, 0.1, 0.1), (0.9, 0.9, 0.9, 0.9)]
    s = spec_with(pts)
    img = _smooth_image()
    fwd = build_inverse_field(s, 64, 64)
    back = build_inverse_field(s.swapped(), 64, 64)
    restored = warp_image(warp_image(img, fwd), back)
    inner = (slice(None), slice(2, -2), slice(2, -2))
    assert np.abs(restored[inner] - img[inner]).mean() < 0.05


def test_warp_range_safety():
    for _ in range(10):
        s = random_spec(rng, max_drag=0.3)
        f = build_inverse_field(s, 64, 64)
        img = rng.uniform(-1, 1, (3, 64, 64)).astype(np.float32)
        out = warp_image(img, f)
        assert out.min() >= img.min() - 1e-6
        assert out.max() <= img.max() + 1e-6


def test_warp_accepts_tensor_and_checks_dims():
    s = random_spec(rng)
    f = build_inverse_field(s, 32, 32)
    img = Tensor(rng.uniform(-1, 1, (3, 32, 32)).astype(np.float32))
    out = warp_image(img, f)
    assert isinstance(out, Tensor) and out.shape == (3, 32, 32)
    with pytest.raises(ValueError, match="field is"):
        warp_image(rng.uniform(-1, 1, (3, 16, 16)), f)
    with pytest.raises(ValueError, match="CHW"):
        warp_image(rng.uniform(-1, 1, (16, 16)), f)
    with pytest.raises(ValueError, match=">= 8"):
        build_inverse_field(s, 4, 64)


def test_field_determinism():
    s = random_spec(rng, max_drag=0.2)
    f1 = build_inverse_field(s, 64, 64)
    f2 = build_inverse_field(s, 64, 64)
    assert np.array_equal(f1.flow, f2.flow)


def test_swapped_rejects_coincident_targets():
    s = spec_with([(0.2, 0.2, 0.5, 0.5), (0.8, 0.8, 0.5, 0.5)])
    with pytest.raises(ValueError, match="not invertible"):
        s.swapped()
