"""Control-point image deformation.

A handful of dragged points (p -> q, normalized [0,1]^2 coordinates)
define a dense deformation via moving least squares with weights
w_i = 1/|p_i - x|^(2*alpha). Images are edited by inverse warping: the
field stores, per output pixel, where to sample the source, and is built
by evaluating MLS with the p/q roles swapped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .backend import kernels
from .tensor import Tensor

VARIANTS = ("similarity", "affine")
_VARIANT_CODE = {"similarity": 0, "affine": 1}
# minimum control points for the local system to be solvable
_VARIANT_MIN = {"similarity": 2, "affine": 3}

COORD_LO, COORD_HI = -0.5, 1.5
MIN_SEPARATION = 1e-6


@dataclass(frozen=True)
class ControlPoint:
    """One drag: source (px, py) moved to target (qx, qy)."""

    px: float
    py: float
    qx: float
    qy: float

    def __post_init__(self):
        vals = (self.px, self.py, self.qx, self.qy)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"control point has non-finite coordinates: {vals}")
        if not all(COORD_LO <= v <= COORD_HI for v in vals):
            raise ValueError(
                f"control point outside [{COORD_LO}, {COORD_HI}]: {vals}")

    def swapped(self):
        return ControlPoint(self.qx, self.qy, self.px, self.py)


@dataclass(frozen=True)
class WarpSpec:
    points: tuple
    variant: str = "similarity"
    alpha: float = 2.0

    def __post_init__(self):
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        if not 1 <= len(pts) <= 64:
            raise ValueError(f"need 1..64 control points, got {len(pts)}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                d = math.hypot(pts[i].px - pts[j].px, pts[i].py - pts[j].py)
                if d < MIN_SEPARATION:
                    raise ValueError(
                        f"source points {i} and {j} coincide within {MIN_SEPARATION}")

    def source_array(self):
        return np.array([[p.px, p.py] for p in self.points], np.float64)

    def target_array(self):
        return np.array([[p.qx, p.qy] for p in self.points], np.float64)

    def swapped(self):
        """Exchange p/q roles; used to build inverse sampling fields."""
        try:
            return WarpSpec(tuple(p.swapped() for p in self.points), self.variant, self.alpha)
        except ValueError as e:
            raise ValueError(f"spec is not invertible by role swap: {e}") from e

    def validate_for_variant(self):
        need = _VARIANT_MIN[self.variant]
        if len(self.points) < need:
            raise ValueError(
                f"{self.variant} MLS needs at least {need} control points, "
                f"got {len(self.points)}")
        if self.variant == "affine":
            ps = self.source_array()
            centered = ps - ps.mean(axis=0)
            s = np.linalg.svd(centered, compute_uv=False)
            if s[1] < 1e-7:
                raise ValueError("affine MLS needs non-collinear source points")

    def to_json(self):
        return {
            "variant": self.variant,
            "alpha": self.alpha,
            "points": [{"px": p.px, "py": p.py, "qx": p.qx, "qy": p.qy}
                       for p in self.points],
        }

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict):
            raise ValueError(f"warp spec must be an object, got {type(obj).__name__}")
        try:
            pts = tuple(ControlPoint(float(p["px"]), float(p["py"]),
                                     float(p["qx"]), float(p["qy"]))
                        for p in obj["points"])
        except (KeyError, TypeError) as e:
            raise ValueError(f"malformed control point list: {e}") from e
        return cls(pts,
                   variant=obj.get("variant", "similarity"),
                   alpha=float(obj.get("alpha", 2.0)))


@dataclass
class DeformationField:
    """Per-output-pixel source coordinates, in pixels.

    flow[y, x] = (source_y, source_x). The identity field satisfies
    flow(x) = x exactly.
    """

    width: int
    height: int
    flow: np.ndarray = dc_field(repr=False, default=None)

    def __post_init__(self):
        if self.flow is None:
            ys, xs = np.meshgrid(np.arange(self.height, dtype=np.float64),
                                 np.arange(self.width, dtype=np.float64),
                                 indexing="ij")
            self.flow = np.stack([ys, xs], axis=-1)
        if self.flow.shape != (self.height, self.width, 2):
            raise ValueError(
                f"flow shape {self.flow.shape} does not match "
                f"{(self.height, self.width, 2)}")
        if not np.isfinite(self.flow).all():
            raise ValueError("flow contains non-finite coordinates")

    @classmethod
    def identity(cls, width, height):
        return cls(width=width, height=height)


def mls_map_many(spec: WarpSpec, pts):
    """Forward deformation of an (n, 2) array of normalized (x, y) points."""
    spec.validate_for_variant()
    pts = np.ascontiguousarray(np.asarray(pts, np.float64).reshape(-1, 2))
    return kernels.mls_eval(spec.source_array(), spec.target_array(),
                            _VARIANT_CODE[spec.variant], spec.alpha, pts)


def mls_map(spec: WarpSpec, x):
    """Forward deformation of one normalized (x, y) position."""
    out = mls_map_many(spec, np.asarray(x, np.float64).reshape(1, 2))
    return float(out[0, 0]), float(out[0, 1])


def build_inverse_field(spec: WarpSpec, width, height) -> DeformationField:
    """Field mapping each output pixel to its source location under spec."""
    if width < 8 or height < 8:
        raise ValueError(f"field extents must be >= 8, got {width}x{height}")
    inv = spec.swapped()
    inv.validate_for_variant()
    xs = (np.arange(width, dtype=np.float64) + 0.5) / width
    ys = (np.arange(height, dtype=np.float64) + 0.5) / height
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    mapped = kernels.mls_eval(inv.source_array(), inv.target_array(),
                              _VARIANT_CODE[inv.variant], inv.alpha,
                              np.ascontiguousarray(pts))
    flow = np.empty((height, width, 2), np.float64)
    flow[:, :, 0] = mapped[:, 1].reshape(height, width) * height - 0.5
    flow[:, :, 1] = mapped[:, 0].reshape(height, width) * width - 0.5
    bad = ~np.isfinite(flow)
    if bad.any():
        raise ValueError(f"deformation field has {int(bad.sum())} non-finite entries")
    return DeformationField(width=width, height=height, flow=flow)


def warp_image(image, field: DeformationField):
    """Bilinear resample of a CHW image at the field's source coordinates.

    Out-of-bounds lookups clamp to the nearest edge pixel. Accepts a numpy
    array or a Tensor; returns the same kind.
    """
    is_tensor = isinstance(image, Tensor)
    data = image.data if is_tensor else np.asarray(image)
    if data.ndim != 3:
        raise ValueError(f"expected CHW image, got shape {data.shape}")
    c, h, w = data.shape
    if (h, w) != (field.height, field.width):
        raise ValueError(
            f"image is {h}x{w} but field is {field.height}x{field.width}")
    out = kernels.bilinear_warp(np.ascontiguousarray(data), field.flow)
    return Tensor(out) if is_tensor else out
