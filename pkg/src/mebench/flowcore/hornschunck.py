"""Dense optical flow between an onset and an apex frame.

Variational smoothness-regularized flow (the classical quadratic data +
smoothness objective) solved with Jacobi iterations inside a
coarse-to-fine pyramid with inter-level warping. The flow convention is

    onset(x, y) ~= apex(x + u(x, y), y + v(x, y))

so a scene feature that moved by +t pixels from onset to apex yields
u = +t_x, v = +t_y.

The solver is fully deterministic: fixed iteration counts, fixed update
order, no data-dependent stopping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate, gaussian_filter, map_coordinates

from ..errors import ConfigError, DataError
from .frames import GrayFrame

# weighted 8-neighborhood average used for the smoothness term
_AVG_KERNEL = np.array(
    [[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]],
    dtype=np.float64,
)

_MIN_SIDE = 8  # coarsest pyramid level is never smaller than this


class NonFiniteFlowError(DataError):
    """The solver produced a non-finite intermediate; never silently clamped."""


@dataclass(frozen=True)
class FlowParams:
    """Solver parameters; defaults cover micro-expression-scale motion."""

    smoothness_alpha: float = 15.0
    iterations: int = 200
    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    zero_init: bool = True

    def __post_init__(self):
        if self.smoothness_alpha <= 0:
            raise ConfigError("smoothness_alpha must be > 0")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.pyramid_levels < 1:
            raise ConfigError("pyramid_levels must be >= 1")
        if not (0.0 < self.pyramid_scale < 1.0):
            raise ConfigError("pyramid_scale must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "smoothness_alpha": self.smoothness_alpha,
            "iterations": self.iterations,
            "pyramid_levels": self.pyramid_levels,
            "pyramid_scale": self.pyramid_scale,
            "zero_init": self.zero_init,
        }


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement (u horizontal, v vertical), in pixels."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise DataError(f"u/v shape mismatch: {u.shape} vs {v.shape}")
        u.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape


def bilinear_resize(img: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Deterministic bilinear resize with corner-aligned sample coordinates."""
    h, w = img.shape
    if (new_h, new_w) == (h, w):
        return img.copy()
    ys = np.linspace(0.0, h - 1.0, new_h) if new_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1.0, new_w) if new_w > 1 else np.zeros(1)
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    return map_coordinates(img, [grid_y, grid_x], order=1, mode="nearest")


def warp_bilinear(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample img at (x + u, y + v) with bilinear interpolation, edge-clamped.

    Exact at zero displacement: integer coordinates reproduce img bit-for-bit.
    """
    h, w = img.shape
    grid_y, grid_x = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return map_coordinates(img, [grid_y + v, grid_x + u], order=1, mode="nearest")


def _derivatives(im1: np.ndarray, im2: np.ndarray):
    """Spatial/temporal derivative estimates averaged over the frame pair (2x2 stencils)."""
    kx = np.array([[-1, 1], [-1, 1]], dtype=np.float64) * 0.25
    ky = np.array([[-1, -1], [1, 1]], dtype=np.float64) * 0.25
    kt = np.ones((2, 2), dtype=np.float64) * 0.25
    fx = correlate(im1, kx, mode="nearest") + correlate(im2, kx, mode="nearest")
    fy = correlate(im1, ky, mode="nearest") + correlate(im2, ky, mode="nearest")
    ft = correlate(im2, kt, mode="nearest") - correlate(im1, kt, mode="nearest")
    return fx, fy, ft


def _solve_level(im1, im2, u, v, alpha, iterations):
    """Refine (u, v) on one pyramid level: warp, then Jacobi-iterate the increment."""
    warped = warp_bilinear(im2, u, v)
    fx, fy, ft = _derivatives(im1, warped)
    denom = alpha * alpha + fx * fx + fy * fy
    du = np.zeros_like(u)
    dv = np.zeros_like(v)
    for _ in range(iterations):
        du_bar = correlate(du, _AVG_KERNEL, mode="nearest")
        dv_bar = correlate(dv, _AVG_KERNEL, mode="nearest")
        shared = (fx * du_bar + fy * dv_bar + ft) / denom
        du = du_bar - fx * shared
        dv = dv_bar - fy * shared
    return u + du, v + dv


def _pyramid(values: np.ndarray, levels: int, scale: float) -> list[np.ndarray]:
    """Image pyramid, finest first; stops early when a side would drop below 8 px."""
    out = [values]
    sigma = 0.5 * np.sqrt(max(1.0 / (scale * scale) - 1.0, 0.0))
    for _ in range(1, levels):
        prev = out[-1]
        new_h = int(round(prev.shape[0] * scale))
        new_w = int(round(prev.shape[1] * scale))
        if new_h < _MIN_SIDE or new_w < _MIN_SIDE or (new_h, new_w) == prev.shape:
            break
        smoothed = gaussian_filter(prev, sigma=sigma, mode="nearest") if sigma > 0 else prev
        out.append(bilinear_resize(smoothed, new_h, new_w))
    return out


def _coarse_shift_init(im1: np.ndarray, im2: np.ndarray, max_shift: int = 2):
    """Best integer global shift by exhaustive SSD over [-max_shift, max_shift]^2."""
    best = (0, 0)
    best_cost = np.inf
    h, w = im1.shape
    m = max_shift
    for dy in range(-m, m + 1):
        for dx in range(-m, m + 1):
            a = im1[max(0, -dy) : h - max(0, dy), max(0, -dx) : w - max(0, dx)]
            b = im2[max(0, dy) : h - max(0, -dy), max(0, dx) : w - max(0, -dx)]
            cost = np.mean((a - b) ** 2)
            if cost < best_cost - 1e-15:
                best_cost = cost
                best = (dx, dy)
    return best


def estimate_flow(onset: GrayFrame, apex: GrayFrame, params: FlowParams | None = None) -> FlowField:
    """Estimate the dense displacement field carrying onset pixels to apex."""
    params = params or FlowParams()
    if (onset.height, onset.width) != (apex.height, apex.width):
        raise DataError(
            f"frame dims differ: onset {onset.height}x{onset.width} vs apex {apex.height}x{apex.width}"
        )
    if min(onset.height, onset.width) < _MIN_SIDE:
        raise DataError(f"frames must be at least {_MIN_SIDE}px per side for flow estimation")

    # The conventional smoothness weight (default 15) is calibrated against
    # 8-bit luminance gradients, so the solver works on a 0..255 scale
    # internally; displacements are in pixels either way.
    pyr1 = _pyramid(onset.values * 255.0, params.pyramid_levels, params.pyramid_scale)
    pyr2 = _pyramid(apex.values * 255.0, params.pyramid_levels, params.pyramid_scale)

    coarse = pyr1[-1]
    if params.zero_init:
        u = np.zeros_like(coarse)
        v = np.zeros_like(coarse)
    else:
        dx, dy = _coarse_shift_init(coarse, pyr2[-1])
        u = np.full_like(coarse, float(dx))
        v = np.full_like(coarse, float(dy))

    for level in range(len(pyr1) - 1, -1, -1):
        im1, im2 = pyr1[level], pyr2[level]
        if u.shape != im1.shape:
            scale_x = im1.shape[1] / u.shape[1]
            scale_y = im1.shape[0] / u.shape[0]
            u = bilinear_resize(u, *im1.shape) * scale_x
            v = bilinear_resize(v, *im1.shape) * scale_y
        u, v = _solve_level(im1, im2, u, v, params.smoothness_alpha, params.iterations)

    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        raise NonFiniteFlowError("flow solver produced non-finite values")
    return FlowField(u=u, v=v)
