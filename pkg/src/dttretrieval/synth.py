"""Procedural object-on-clutter sequences with ground-truth masks.

Each object is a textured sphere seen under orthographic projection, spinning
about its vertical axis like an object on a turntable. A sequence keeps the
sphere near the frame centre while the background drifts (parallax from a
camera orbiting the object) and applies a small global hand-held jitter to
everything.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .ingest import Frame, VideoSequence, save_frame, save_mask_pgm

FRAME_W, FRAME_H = 160, 120
SPRITE_RADIUS = 30.0
N_FRAMES = 10
PARALLAX_PX = 2.0  # background drift per frame relative to the sprite
ROTATION_STEP = 2.0  # degrees of spin per frame
START_SPREAD = 20.0  # start angles are drawn from [-START_SPREAD, 0] degrees
FINE_TEXTURE = 1.4  # relative amplitude of the background's fine texture
GRATINGS = (1, 3)  # half-open range for the number of sinusoidal gratings
BLOBS = (4, 9)  # half-open range for the number of blobs


@dataclass
class SynthConfig:
    width: int = FRAME_W
    height: int = FRAME_H
    radius: float = SPRITE_RADIUS
    n_frames: int = N_FRAMES
    parallax: float = PARALLAX_PX
    rotation_step: float = ROTATION_STEP
    jitter: float = 0.3


def _normalize(img: np.ndarray, lo: float = 0.1, hi: float = 0.9) -> np.ndarray:
    img = img - img.min()
    span = img.max()
    return lo + (hi - lo) * (img / span if span > 0 else img)


def object_texture(rng: np.random.Generator, shape: tuple[int, int] = (96, 192)) -> np.ndarray:
    """Equirectangular surface texture: rows span latitude, columns longitude."""
    h, size = shape
    yy, xx = np.mgrid[0:h, 0:size].astype(np.float64)
    tex = ndimage.gaussian_filter(rng.standard_normal((h, size)), rng.uniform(1.5, 2.5))
    tex /= tex.std()
    for _ in range(rng.integers(*GRATINGS)):
        period = rng.uniform(7.0, 16.0)
        th = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        tex += rng.uniform(0.8, 1.6) * np.sin(2.0 * np.pi * (xx * np.cos(th) + yy * np.sin(th)) / period + phase)
    for _ in range(rng.integers(*BLOBS)):
        cx, cy = rng.uniform(0, size), rng.uniform(0, h)
        ax, ay = rng.uniform(4.0, 14.0, 2)
        blob = ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 <= 1.0
        tex[blob] += rng.choice([-1.0, 1.0]) * rng.uniform(1.5, 3.0)
    return _normalize(ndimage.gaussian_filter(tex, 0.7))


def background_texture(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    """Clutter: overlapping flat-shaded rectangles under fine isotropic texture."""
    yy, xx = np.mgrid[0:height, 0:width]
    bg = ndimage.gaussian_filter(rng.standard_normal((height, width)), rng.uniform(4.0, 6.0))
    bg /= bg.std()
    for _ in range(rng.integers(10, 20)):
        x0, y0 = rng.uniform(0, width), rng.uniform(0, height)
        w, h = rng.uniform(8, 40, 2)
        rect = (np.abs(xx - x0) <= w / 2) & (np.abs(yy - y0) <= h / 2)
        bg[rect] = rng.uniform(-2.0, 2.0)
    bg = ndimage.gaussian_filter(bg, 1.0)
    fine = ndimage.gaussian_filter(rng.standard_normal((height, width)), 2.0)
    bg += FINE_TEXTURE * fine / fine.std()
    return _normalize(bg, 0.2, 0.8)


def render_sequence(
    texture: np.ndarray,
    rng: np.random.Generator,
    cfg: SynthConfig = SynthConfig(),
    start_deg: float = 0.0,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    w, h, n = cfg.width, cfg.height, cfg.n_frames
    margin = int(np.ceil(cfg.parallax * n + 8 * cfg.jitter * n)) + 10
    bg = background_texture(rng, w + 2 * margin, h + 2 * margin)
    offset = rng.uniform(-4.0, 4.0, 2)  # sphere placement within the frame
    steps = rng.normal(0.0, cfg.jitter, (n, 2))
    steps[0] = 0.0
    jitter = np.cumsum(steps, axis=0)
    th, tw = texture.shape
    r = cfg.radius
    rows, cols = np.indices((h, w), dtype=np.float64)
    frames, masks = [], []
    for i in range(n):
        jx, jy = jitter[i]
        bx = margin - cfg.parallax * i - jx
        by = margin - jy
        img = ndimage.map_coordinates(bg, [rows + by, cols + bx], order=1, mode="reflect")
        cx = (w - 1) / 2.0 + offset[0] + jx
        cy = (h - 1) / 2.0 + offset[1] + jy
        u, v = cols - cx, rows - cy
        dist = np.hypot(u, v)
        z = np.sqrt(np.clip(r * r - u * u - v * v, 0.0, None))
        lon = np.arctan2(u, z) + np.deg2rad(start_deg + cfg.rotation_step * i)
        lat = np.arcsin(np.clip(v / r, -1.0, 1.0))
        tc = (lon / (2.0 * np.pi) + 0.5) * tw
        tr = (lat / np.pi + 0.5) * (th - 1)
        spr = ndimage.map_coordinates(texture, [tr, tc], order=1, mode="grid-wrap")
        spr = spr * (0.75 + 0.25 * z / r)  # mild shading, fixed relative to the camera
        alpha = np.clip(r + 0.5 - dist, 0.0, 1.0)
        frames.append(np.clip(alpha * spr + (1.0 - alpha) * img, 0.0, 1.0))
        masks.append(dist <= r)
    return frames, masks


@dataclass
class SynthSequence:
    object_id: str
    seq_id: str
    sequence: VideoSequence
    masks: list[np.ndarray]


def synth_generate(n_objects: int, n_sequences: int = 2, seed: int = 0,
                   cfg: SynthConfig = SynthConfig()) -> list[SynthSequence]:
    """Deterministic dataset of ``n_objects * n_sequences`` sequences."""
    if n_objects < 2:
        raise ValueError("need at least two objects")
    root = np.random.SeedSequence(seed)
    obj_seeds = root.spawn(n_objects)
    out = []
    for o, oseed in enumerate(obj_seeds):
        tex_seed, *seq_seeds = oseed.spawn(1 + n_sequences)
        texture = object_texture(np.random.default_rng(tex_seed))
        oid = f"obj{o:02d}"
        for s, sseed in enumerate(seq_seeds):
            rng = np.random.default_rng(sseed)
            start = rng.uniform(-START_SPREAD, 0.0)
            frames, masks = render_sequence(texture, rng, cfg, start)
            seq = VideoSequence(f"{oid}/seq{s}", tuple(Frame(f) for f in frames),
                                "gallery" if s == 0 else "query", {"object": oid})
            out.append(SynthSequence(oid, f"seq{s}", seq, masks))
    return out


def write_dataset(items: list[SynthSequence], root: str | Path) -> None:
    """``<root>/<object>/<seq>/frame_%04d.png``; ground truth in ``<seq>/masks/mask_%04d.pgm``."""
    root = Path(root)
    for it in items:
        d = root / it.object_id / it.seq_id
        (d / "masks").mkdir(parents=True, exist_ok=True)
        for i, (f, m) in enumerate(zip(it.sequence.frames, it.masks)):
            save_frame(f, d / f"frame_{i:04d}.png")
            save_mask_pgm(m, d / "masks" / f"mask_{i:04d}.pgm")
