"""Procedural training scenes: a rotated ellipse with two triangular ears.

Shape parameters drive an anti-aliased SDF render; color parameters pick
foreground/background RGB in disjoint luma bands (background light,
foreground dark) so a mid-gray threshold recovers the foreground mask
exactly. A fixed random linear map turns latent codes into parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import kernels

# ear placement in the ellipse's local frame (y axis points down)
EAR_PHIS = (-math.pi / 2 - 0.65, -math.pi / 2 + 0.65)
EAR_HALF_ANGLE = 0.45

# parameter ranges the latent mapper squashes into; chosen so the whole
# figure fits on canvas with margin. Validation ranges below are wider.
SHAPE_RANGES = np.array([
    (0.38, 0.62),   # center x
    (0.38, 0.62),   # center y
    (0.12, 0.26),   # radius a
    (0.12, 0.26),   # radius b
    (-0.45, 0.45),  # rotation
    (0.05, 0.22),   # ear length (left)
    (0.05, 0.22),   # ear length (right)
])
FG_BAND = (0.05, 0.45)
BG_BAND = (0.55, 0.95)


@dataclass(frozen=True)
class SceneParams:
    center: tuple
    radii: tuple
    rotation: float
    ears: tuple
    fg: tuple
    bg: tuple

    def __post_init__(self):
        cx, cy = self.center
        a, b = self.radii
        if not (0.3 <= cx <= 0.7 and 0.3 <= cy <= 0.7):
            raise ValueError(f"center outside [0.3, 0.7]^2: {self.center}")
        if not (0.12 <= a <= 0.3 and 0.12 <= b <= 0.3):
            raise ValueError(f"radii outside [0.12, 0.3]: {self.radii}")
        if not -math.pi / 2 <= self.rotation <= math.pi / 2:
            raise ValueError(f"rotation outside [-pi/2, pi/2]: {self.rotation}")
        for e in self.ears:
            # 0 disables an ear; otherwise lengths live in [0.05, 0.25]
            if e != 0.0 and not 0.05 <= e <= 0.25:
                raise ValueError(f"ear length outside {{0}} u [0.05, 0.25]: {self.ears}")
        for c in (*self.fg, *self.bg):
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"colors must lie in [0, 1]: fg={self.fg} bg={self.bg}")


def _ear_triangle(params: SceneParams, side: int):
    """Local-frame triangle (base chord on the ellipse, apex outward)."""
    a, b = params.radii
    e = params.ears[side]
    phi = EAR_PHIS[side]
    bx0, by0 = a * math.cos(phi - EAR_HALF_ANGLE), b * math.sin(phi - EAR_HALF_ANGLE)
    bx1, by1 = a * math.cos(phi + EAR_HALF_ANGLE), b * math.sin(phi + EAR_HALF_ANGLE)
    px, py = a * math.cos(phi), b * math.sin(phi)
    nx, ny = math.cos(phi) / a, math.sin(phi) / b
    nn = math.hypot(nx, ny)
    ax, ay = px + e * nx / nn, py + e * ny / nn
    return (bx0, by0, bx1, by1, ax, ay)


def ear_apex(params: SceneParams, side: int):
    """Global normalized coordinates of an ear tip."""
    _, _, _, _, ax, ay = _ear_triangle(params, side)
    c, s = math.cos(params.rotation), math.sin(params.rotation)
    gx = c * ax - s * ay + params.center[0]
    gy = s * ax + c * ay + params.center[1]
    return gx, gy


def _coverage(params: SceneParams, size: int):
    tris = np.array([_ear_triangle(params, 0), _ear_triangle(params, 1)], np.float64)
    return kernels.render_coverage(params.center[0], params.center[1],
                                   params.radii[0], params.radii[1],
                                   params.rotation, tris, size)


def render_scene(params: SceneParams, size: int = 64):
    """Anti-aliased render as float32 CHW in [-1, 1]."""
    cov = _coverage(params, size)
    img = np.empty((3, size, size), np.float32)
    for c in range(3):
        plane = params.bg[c] + cov * (params.fg[c] - params.bg[c])
        img[c] = (2.0 * plane - 1.0).astype(np.float32)
    return img


def foreground_mask(params: SceneParams, size: int = 64):
    return _coverage(params, size) > 0.5


def luma(img):
    """Rec.601 luma of a CHW image (any range)."""
    return 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]


def foreground_mask_from_image(img):
    """Threshold at mid-gray; valid because color bands are luma-separated."""
    return luma(img) < 0.0  # [-1,1] domain: mid-gray is 0


class SceneMapper:
    """Fixed random linear maps from w codes to scene parameters.

    Raw projections are standardized against a probe batch of w vectors,
    squashed by a sigmoid, and scaled into the parameter ranges. The
    mapper's constants ride along inside checkpoints (scene.* tensors).
    """

    TENSOR_NAMES = ("scene.p_shape", "scene.p_color", "scene.mu_shape",
                    "scene.sd_shape", "scene.mu_color", "scene.sd_color")

    def __init__(self, p_shape, p_color, mu_shape, sd_shape, mu_color, sd_color):
        self.p_shape = np.asarray(p_shape, np.float32)
        self.p_color = np.asarray(p_color, np.float32)
        self.mu_shape = np.asarray(mu_shape, np.float32)
        self.sd_shape = np.asarray(sd_shape, np.float32)
        self.mu_color = np.asarray(mu_color, np.float32)
        self.sd_color = np.asarray(sd_color, np.float32)

    @classmethod
    def fit(cls, w_probe, seed):
        w_probe = np.asarray(w_probe, np.float32)
        dim = w_probe.shape[1]
        rng = np.random.default_rng(seed)
        p_shape = (rng.standard_normal((dim, 7)) / math.sqrt(dim)).astype(np.float32)
        p_color = (rng.standard_normal((dim, 6)) / math.sqrt(dim)).astype(np.float32)
        raw_s = w_probe @ p_shape
        raw_c = w_probe @ p_color
        return cls(p_shape, p_color,
                   raw_s.mean(axis=0), np.maximum(raw_s.std(axis=0), 1e-6),
                   raw_c.mean(axis=0), np.maximum(raw_c.std(axis=0), 1e-6))

    def to_tensors(self):
        return dict(zip(self.TENSOR_NAMES,
                        (self.p_shape, self.p_color, self.mu_shape,
                         self.sd_shape, self.mu_color, self.sd_color)))

    @classmethod
    def from_tensors(cls, tensors):
        try:
            return cls(*(tensors[n] for n in cls.TENSOR_NAMES))
        except KeyError as e:
            raise ValueError(f"checkpoint lacks scene mapper tensor {e}") from e

    @staticmethod
    def _squash(x, lo, hi):
        return lo + (hi - lo) / (1.0 + np.exp(-np.float64(x)))

    def shape_fields(self, w_shape):
        z = (np.asarray(w_shape, np.float32) @ self.p_shape - self.mu_shape) / self.sd_shape
        lo, hi = SHAPE_RANGES[:, 0], SHAPE_RANGES[:, 1]
        return self._squash(z, lo, hi)

    def color_fields(self, w_color):
        z = (np.asarray(w_color, np.float32) @ self.p_color - self.mu_color) / self.sd_color
        fg = self._squash(z[:3], *FG_BAND)
        bg = self._squash(z[3:], *BG_BAND)
        return fg, bg

    def params_from(self, w_shape, w_color) -> SceneParams:
        s = self.shape_fields(w_shape)
        fg, bg = self.color_fields(w_color)
        return SceneParams(center=(float(s[0]), float(s[1])),
                           radii=(float(s[2]), float(s[3])),
                           rotation=float(s[4]),
                           ears=(float(s[5]), float(s[6])),
                           fg=tuple(map(float, fg)),
                           bg=tuple(map(float, bg)))
