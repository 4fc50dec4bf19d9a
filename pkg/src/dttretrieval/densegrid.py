"""Upright SIFT-style descriptors sampled on a dense, heavily overlapping grid."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .ingest import Frame

DESCRIPTOR_DIM = 128
CLIP = 0.2
# gradient energy below this is treated as a flat patch
ZERO_NORM = 1e-12


@dataclass(frozen=True)
class GridConfig:
    patch_size: int = 20
    stride_ratio: float = 0.1
    cells_per_side: int = 4
    orientation_bins: int = 8

    def __post_init__(self):
        if not 0.0 < self.stride_ratio <= 1.0:
            raise ValueError(f"stride_ratio must be in (0, 1], got {self.stride_ratio}")
        if self.patch_size <= 0 or self.patch_size % self.cells_per_side:
            raise ValueError(
                f"patch_size {self.patch_size} must be positive and divisible by {self.cells_per_side}"
            )
        if self.stride < 1:
            raise ValueError("stride round(r * s) must be at least 1")

    @property
    def stride(self) -> int:
        return int(round(self.stride_ratio * self.patch_size))

    @property
    def dim(self) -> int:
        return self.cells_per_side**2 * self.orientation_bins

    def grid_shape(self, frame_w: int, frame_h: int) -> tuple[int, int]:
        """(grid_w, grid_h) for a frame of the given size."""
        s, d = self.patch_size, self.stride
        if frame_w < s or frame_h < s:
            raise ValueError(f"frame {frame_w}x{frame_h} smaller than one {s}x{s} patch")
        return (frame_w - s) // d + 1, (frame_h - s) // d + 1


@dataclass
class DescriptorGrid:
    grid_w: int
    grid_h: int
    loci: np.ndarray  # (n, 2) int, (x, y) of patch top-left corners, row-major
    descriptors: np.ndarray  # (n, dim) float64

    def __post_init__(self):
        n = self.grid_w * self.grid_h
        if len(self.loci) != n or len(self.descriptors) != n:
            raise ValueError("loci and descriptor counts must equal grid_w * grid_h")

    def __len__(self) -> int:
        return self.grid_w * self.grid_h


def grid_loci(frame_w: int, frame_h: int, cfg: GridConfig = GridConfig()) -> np.ndarray:
    """Top-left patch corners ``(i*stride, j*stride)`` in row-major order."""
    gw, gh = cfg.grid_shape(frame_w, frame_h)
    ys, xs = np.mgrid[0:gh, 0:gw]
    return np.stack([xs.ravel() * cfg.stride, ys.ravel() * cfg.stride], axis=1)


def _gradients(luma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # central differences, replicated edges
    p = np.pad(luma, 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) * 0.5
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) * 0.5
    return gx, gy


def _orientation_channels(gx: np.ndarray, gy: np.ndarray, nbins: int) -> np.ndarray:
    """Split gradient magnitude over ``nbins`` orientation channels by linear interpolation."""
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), 2.0 * np.pi)
    pos = theta / (2.0 * np.pi / nbins)
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(np.int64) % nbins
    hi = (lo + 1) % nbins
    out = np.zeros((nbins,) + gx.shape)
    rows, cols = np.indices(gx.shape)
    # each pixel appears once per statement, so fancy-index += is safe
    out[lo, rows, cols] += mag * (1.0 - frac)
    out[hi, rows, cols] += mag * frac
    return out


_KERNEL_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _cell_kernels(s: int, cells: int) -> np.ndarray:
    """(cells*cells, s, s) pixel weights: bilinear cell sharing times a Gaussian of sigma s/2."""
    key = (s, cells)
    if key not in _KERNEL_CACHE:
        u = np.arange(s) + 0.5
        cw = s / cells
        centers = (np.arange(cells) + 0.5) * cw
        share = np.maximum(0.0, 1.0 - np.abs(u[None, :] - centers[:, None]) / cw)  # (cells, s)
        sigma = s / 2.0
        g = np.exp(-((u - s / 2.0) ** 2) / (2.0 * sigma**2))
        wx = share * g[None, :]
        k = np.einsum("ay,bx->abyx", wx, wx).reshape(cells * cells, s, s)
        k.setflags(write=False)
        _KERNEL_CACHE[key] = k
    return _KERNEL_CACHE[key]


def normalize_descriptor(raw: np.ndarray) -> np.ndarray:
    """L2-normalize, clip at 0.2, renormalize. Flat rows come back all-zero.

    Works row-wise on 2D input.
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    norm = np.linalg.norm(raw, axis=1, keepdims=True)
    flat = norm[:, 0] <= ZERO_NORM
    v = raw / np.where(flat[:, None], 1.0, norm)
    v = np.minimum(v, CLIP)
    norm2 = np.linalg.norm(v, axis=1, keepdims=True)
    v = v / np.where(flat[:, None], 1.0, norm2)
    v[flat] = 0.0
    return v


def _raw_histograms(channels: np.ndarray, corners: np.ndarray, cfg: GridConfig) -> np.ndarray:
    s = cfg.patch_size
    kern = _cell_kernels(s, cfg.cells_per_side).reshape(cfg.cells_per_side**2, s * s)
    out = np.empty((len(corners), cfg.cells_per_side**2, cfg.orientation_bins))
    for o in range(cfg.orientation_bins):
        win = sliding_window_view(channels[o], (s, s))
        patches = win[corners[:, 1], corners[:, 0]].reshape(len(corners), s * s)
        out[:, :, o] = patches @ kern.T
    return out.reshape(len(corners), -1)


def extract_descriptor(frame: Frame, locus: tuple[int, int], cfg: GridConfig = GridConfig()) -> np.ndarray:
    """128-d descriptor for the ``s x s`` patch whose top-left corner is ``locus``."""
    x, y = int(locus[0]), int(locus[1])
    s = cfg.patch_size
    if x < 0 or y < 0 or x + s > frame.width or y + s > frame.height:
        raise IndexError(f"patch at {locus} with size {s} leaves the {frame.width}x{frame.height} frame")
    # one-pixel halo so border gradients match the full-frame computation
    y0, y1 = max(y - 1, 0), min(y + s + 1, frame.height)
    x0, x1 = max(x - 1, 0), min(x + s + 1, frame.width)
    sub = frame.luma[y0:y1, x0:x1]
    pad = ((1 if y == 0 else 0, 1 if y + s == frame.height else 0),
           (1 if x == 0 else 0, 1 if x + s == frame.width else 0))
    sub = np.pad(sub, pad, mode="edge")
    gx, gy = _gradients(sub)
    gx, gy = gx[1:-1, 1:-1], gy[1:-1, 1:-1]
    ch = _orientation_channels(gx, gy, cfg.orientation_bins)
    raw = _raw_histograms(ch, np.array([[0, 0]]), cfg)
    return normalize_descriptor(raw)[0]


def extract_grid(frame: Frame, cfg: GridConfig = GridConfig()) -> DescriptorGrid:
    gw, gh = cfg.grid_shape(frame.width, frame.height)
    loci = grid_loci(frame.width, frame.height, cfg)
    gx, gy = _gradients(frame.luma)
    ch = _orientation_channels(gx, gy, cfg.orientation_bins)
    raw = _raw_histograms(ch, loci, cfg)
    return DescriptorGrid(gw, gh, loci, normalize_descriptor(raw))


# -- serialization -----------------------------------------------------------

_DGRD_MAGIC = b"DGRD"
_DGRD_VERSION = 1
_DGRD_HEADER = struct.Struct("<4sHIIIII")


def save_descriptor_grid(grid: DescriptorGrid, path: str | Path, cfg: GridConfig = GridConfig()) -> None:
    dim = grid.descriptors.shape[1]
    with open(path, "wb") as fh:
        fh.write(_DGRD_HEADER.pack(_DGRD_MAGIC, _DGRD_VERSION, grid.grid_w, grid.grid_h, dim,
                                   cfg.patch_size, cfg.stride))
        fh.write(np.ascontiguousarray(grid.descriptors, dtype="<f4").tobytes())


def load_descriptor_grid(path: str | Path) -> DescriptorGrid:
    data = Path(path).read_bytes()
    magic, version, gw, gh, dim, _s, stride = _DGRD_HEADER.unpack_from(data)
    if magic != _DGRD_MAGIC:
        raise ValueError(f"{path}: not a descriptor grid file")
    if version != _DGRD_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    desc = np.frombuffer(data, dtype="<f4", offset=_DGRD_HEADER.size, count=gw * gh * dim)
    ys, xs = np.mgrid[0:gh, 0:gw]
    loci = np.stack([xs.ravel() * stride, ys.ravel() * stride], axis=1)
    return DescriptorGrid(gw, gh, loci, desc.reshape(gw * gh, dim).astype(np.float64))
