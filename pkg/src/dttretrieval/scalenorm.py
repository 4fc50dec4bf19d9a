"""Motion-parallax scale normalization.

Dense pyramidal Lucas-Kanade flow, removal of the translatory (mean) component,
and a radial search for the flow-magnitude discontinuity that marks the
boundary of the centred object.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .ingest import DimensionMismatchError, Frame, VideoSequence

LK_WINDOW = 15
PYRAMID_LEVELS = 3
LK_ITERATIONS = 3
MIN_EIGENVALUE = 1e-4

N_RAYS = 36
MAG_SIGMA = 2.0
TARGET_FRACTION = 0.25
SCALE_MIN, SCALE_MAX = 0.5, 2.0
# residual magnitude (px) below which the flow is treated as carrying no boundary
FLAT_FLOW = 1e-3


@dataclass
class FlowField:
    u: np.ndarray  # (h, w) horizontal displacement, px
    v: np.ndarray  # (h, w) vertical displacement, px

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise ValueError("u and v must have the same shape")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValueError("flow components must be finite")

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    def mean(self) -> tuple[float, float]:
        return float(self.u.mean()), float(self.v.mean())


@dataclass
class ScaleEstimate:
    object_radius: float
    scale_factor: float
    coarse_mask: np.ndarray  # (h, w) bool
    ray_radii: np.ndarray | None = None


def _downsample(img: np.ndarray) -> np.ndarray:
    return ndimage.gaussian_filter(img, 1.0, mode="nearest")[::2, ::2]


def _grad(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.pad(img, 1, mode="edge")
    return (p[1:-1, 2:] - p[1:-1, :-2]) * 0.5, (p[2:, 1:-1] - p[:-2, 1:-1]) * 0.5


def _lk_level(a, b, u, v, window, iterations):
    ix, iy = _grad(a)
    sxx = ndimage.uniform_filter(ix * ix, window, mode="nearest")
    syy = ndimage.uniform_filter(iy * iy, window, mode="nearest")
    sxy = ndimage.uniform_filter(ix * iy, window, mode="nearest")
    det = sxx * syy - sxy * sxy
    tr = sxx + syy
    lam_min = 0.5 * (tr - np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0)))
    ok = lam_min >= MIN_EIGENVALUE
    safe_det = np.where(ok, det, 1.0)
    rows, cols = np.indices(a.shape, dtype=np.float64)
    for _ in range(iterations):
        bw = ndimage.map_coordinates(b, [rows + v, cols + u], order=1, mode="nearest")
        it = bw - a
        sxt = ndimage.uniform_filter(ix * it, window, mode="nearest")
        syt = ndimage.uniform_filter(iy * it, window, mode="nearest")
        du = (-syy * sxt + sxy * syt) / safe_det
        dv = (sxy * sxt - sxx * syt) / safe_det
        u = u + np.where(ok, du, 0.0)
        v = v + np.where(ok, dv, 0.0)
    return u, v, ok


def compute_flow(a: Frame, b: Frame, window: int = LK_WINDOW, levels: int = PYRAMID_LEVELS) -> FlowField:
    """Coarse-to-fine Lucas-Kanade flow from ``a`` to ``b`` (``a(x) ~ b(x + flow)``)."""
    if a.shape != b.shape:
        raise DimensionMismatchError(f"frame shapes differ: {a.shape} vs {b.shape}")
    pa, pb = [a.luma], [b.luma]
    for _ in range(levels - 1):
        if min(pa[-1].shape) < 2 * window:
            break
        pa.append(_downsample(pa[-1]))
        pb.append(_downsample(pb[-1]))
    u = np.zeros_like(pa[-1])
    v = np.zeros_like(pa[-1])
    ok = None
    for lvl in range(len(pa) - 1, -1, -1):
        shape = pa[lvl].shape
        if u.shape != shape:
            zoom = (shape[0] / u.shape[0], shape[1] / u.shape[1])
            u = ndimage.zoom(u, zoom, order=1, mode="nearest", grid_mode=True) * 2.0
            v = ndimage.zoom(v, zoom, order=1, mode="nearest", grid_mode=True) * 2.0
        u, v, ok = _lk_level(pa[lvl], pb[lvl], u, v, window, LK_ITERATIONS)
    u = np.where(ok, u, 0.0)
    v = np.where(ok, v, 0.0)
    return FlowField(u, v)


def remove_translation(f: FlowField) -> FlowField:
    mu, mv = f.mean()
    u = f.u - mu
    v = f.v - mv
    # second pass removes the rounding left by the first
    u -= u.mean()
    v -= v.mean()
    return FlowField(u, v)


def target_radius(width: int, height: int) -> float:
    return TARGET_FRACTION * min(width, height)


def clamp_scale(factor: float) -> float:
    return float(min(max(factor, SCALE_MIN), SCALE_MAX))


def _ray_mask(h: int, w: int, radii: np.ndarray) -> np.ndarray:
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.indices((h, w), dtype=np.float64)
    dy, dx = rows - cy, cols - cx
    rho = np.hypot(dx, dy)
    pos = np.mod(np.arctan2(dy, dx), 2.0 * np.pi) / (2.0 * np.pi / len(radii))
    i0 = np.floor(pos).astype(np.int64) % len(radii)
    frac = pos - np.floor(pos)
    r = radii[i0] * (1.0 - frac) + radii[(i0 + 1) % len(radii)] * frac
    return rho <= r


def estimate_scale(residual: FlowField, n_rays: int = N_RAYS) -> ScaleEstimate:
    """Object extent from the steepest radial drop of residual flow magnitude."""
    h, w = residual.height, residual.width
    r_target = target_radius(w, h)
    mag = ndimage.gaussian_filter(residual.magnitude(), MAG_SIGMA, mode="nearest")
    if mag.max() < FLAT_FLOW:
        return ScaleEstimate(r_target, 1.0, np.ones((h, w), dtype=bool), None)

    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    radii = np.empty(n_rays)
    for k in range(n_rays):
        th = 2.0 * np.pi * k / n_rays
        c, s = np.cos(th), np.sin(th)
        limits = []
        if c > 1e-12:
            limits.append((w - 1 - cx) / c)
        elif c < -1e-12:
            limits.append(-cx / c)
        if s > 1e-12:
            limits.append((h - 1 - cy) / s)
        elif s < -1e-12:
            limits.append(-cy / s)
        rmax = min(limits)
        r = np.arange(0.0, np.floor(rmax) + 1.0)
        prof = ndimage.map_coordinates(mag, [cy + r * s, cx + r * c], order=1, mode="nearest")
        grad = np.diff(prof)
        i = int(np.argmin(grad))
        radii[k] = r[i] + 0.5 if grad[i] < 0.0 else rmax
    radius = float(np.median(radii))
    if radius <= 0.0:
        return ScaleEstimate(r_target, 1.0, np.ones((h, w), dtype=bool), radii)
    factor = clamp_scale(r_target / radius)
    return ScaleEstimate(radius, factor, _ray_mask(h, w, radii), radii)


def rescale_about_center(img: np.ndarray, factor: float, order: int = 1, mode: str = "nearest",
                         cval: float = 0.0) -> np.ndarray:
    """Zoom ``img`` by ``factor`` about its centre, keeping the array shape."""
    if factor == 1.0:
        return np.array(img, copy=True)
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.indices((h, w), dtype=np.float64)
    src = [cy + (rows - cy) / factor, cx + (cols - cx) / factor]
    return ndimage.map_coordinates(np.asarray(img, dtype=np.float64), src, order=order, mode=mode, cval=cval)


def rescale_mask(mask: np.ndarray, factor: float) -> np.ndarray:
    if factor == 1.0:
        return np.array(mask, dtype=bool, copy=True)
    return rescale_about_center(mask.astype(np.float64), factor, order=1, mode="constant") >= 0.5


def frame_scale_estimates(seq: VideoSequence) -> list[ScaleEstimate]:
    """One estimate per frame, from the flow to the next frame (the last frame reuses the previous pair)."""
    n = len(seq)
    out = []
    for i in range(n - 1):
        out.append(estimate_scale(remove_translation(compute_flow(seq.frames[i], seq.frames[i + 1]))))
    out.append(out[-1])
    return out


def normalize_sequence(seq: VideoSequence, enabled: bool = True, return_factors: bool = False):
    """Rescale every frame so the centred object has radius ``0.25 * min(w, h)``.

    Returns ``(sequence, masks)`` or, with ``return_factors``, ``(sequence, masks, factors)``.
    Frame dimensions are preserved; zoomed-out borders replicate edge pixels.
    """
    h, w = seq.shape
    if not enabled or len(seq) < 2:
        masks = [np.ones((h, w), dtype=bool) for _ in seq.frames]
        factors = [1.0] * len(seq)
        return (seq, masks, factors) if return_factors else (seq, masks)
    estimates = frame_scale_estimates(seq)
    frames, masks, factors = [], [], []
    for frame, est in zip(seq.frames, estimates):
        f = est.scale_factor
        frames.append(Frame(np.clip(rescale_about_center(frame.luma, f), 0.0, 1.0)))
        masks.append(rescale_mask(est.coarse_mask, f))
        factors.append(f)
    out = seq.with_frames(frames)
    return (out, masks, factors) if return_factors else (out, masks)
