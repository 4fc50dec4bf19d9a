"""Frames, video sequences and on-disk dataset layouts."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

IMAGE_SUFFIXES = (".png", ".pgm")

# ITU BT.601 luma weights
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class IngestError(Exception):
    pass


class MissingDirectoryError(IngestError, FileNotFoundError):
    pass


class NoFramesError(IngestError):
    pass


class DimensionMismatchError(IngestError, ValueError):
    pass


class DecodeError(IngestError):
    pass


@dataclass(frozen=True)
class Frame:
    """A single luminance image with intensities in [0, 1].

    ``luma`` is a row-major ``(height, width)`` float64 array.
    """

    luma: np.ndarray

    def __post_init__(self):
        luma = np.asarray(self.luma, dtype=np.float64)
        if luma.ndim != 2 or luma.size == 0:
            raise ValueError(f"luma must be a non-empty 2D array, got shape {luma.shape}")
        if not np.all(np.isfinite(luma)) or luma.min() < 0.0 or luma.max() > 1.0:
            raise ValueError("luma intensities must lie in [0, 1]")
        luma.setflags(write=False)
        object.__setattr__(self, "luma", luma)

    @property
    def width(self) -> int:
        return self.luma.shape[1]

    @property
    def height(self) -> int:
        return self.luma.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.luma.shape


@dataclass(frozen=True)
class VideoSequence:
    id: str
    frames: tuple[Frame, ...]
    role: str = "gallery"
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise NoFramesError("no frames")
        shape = frames[0].shape
        for f in frames[1:]:
            if f.shape != shape:
                raise DimensionMismatchError(
                    f"sequence {self.id!r}: frame shape {f.shape} differs from {shape}"
                )
        if self.role not in ("gallery", "query"):
            raise ValueError(f"role must be 'gallery' or 'query', got {self.role!r}")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].shape

    def with_frames(self, frames: Sequence[Frame]) -> "VideoSequence":
        return VideoSequence(self.id, tuple(frames), self.role, dict(self.metadata))


def image_to_luma(img: Image.Image) -> np.ndarray:
    """Convert a decoded PIL image to a float luminance array in [0, 1]."""
    if img.mode in ("I;16", "I;16B", "I;16L"):
        return np.asarray(img, dtype=np.float64) / 65535.0
    if img.mode == "I":
        arr = np.asarray(img, dtype=np.float64)
        return arr / (65535.0 if arr.max() > 255 else 255.0)
    if img.mode == "F":
        return np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if img.mode in ("L", "1"):
        return np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    if img.mode == "LA":
        return np.asarray(img, dtype=np.float64)[..., 0] / 255.0
    rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    return np.clip(rgb @ LUMA_WEIGHTS / 255.0, 0.0, 1.0)


def load_frame(path: str | os.PathLike) -> Frame:
    try:
        with Image.open(path) as img:
            img.load()
            luma = image_to_luma(img)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    return Frame(luma)


def list_frame_files(path: str | os.PathLike) -> list[Path]:
    path = Path(path)
    files = [p for p in path.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    return sorted(files, key=lambda p: p.name)


def load_sequence(path: str | os.PathLike, role: str = "gallery") -> VideoSequence:
    """Load every PNG/PGM in ``path`` (lexicographic filename order) as one sequence."""
    path = Path(path)
    if not path.is_dir():
        raise MissingDirectoryError(f"missing directory: {path}")
    files = list_frame_files(path)
    if not files:
        raise NoFramesError("no frames")
    frames = [load_frame(f) for f in files]
    shape = frames[0].shape
    for f, p in zip(frames, files):
        if f.shape != shape:
            raise DimensionMismatchError(f"{p.name}: shape {f.shape} differs from {shape}")
    return VideoSequence(path.name, tuple(frames), role)


def frame_distance(a: Frame, b: Frame) -> float:
    """Normalized image-space distance ||a - b|| / ||a||.

    Asymmetric: normalized by the first argument. An all-zero ``a`` gives
    ``inf`` unless ``b`` is all-zero as well.
    """
    if a.shape != b.shape:
        raise DimensionMismatchError(f"frame shapes differ: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a.luma))
    diff = float(np.linalg.norm(a.luma - b.luma))
    if norm_a == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / norm_a


def save_frame(frame: Frame | np.ndarray, path: str | os.PathLike) -> None:
    luma = frame.luma if isinstance(frame, Frame) else np.asarray(frame, dtype=np.float64)
    img = Image.fromarray(np.round(np.clip(luma, 0.0, 1.0) * 255.0).astype(np.uint8), mode="L")
    img.save(path)


def save_mask_pgm(mask: np.ndarray, path: str | os.PathLike) -> None:
    img = Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), mode="L")
    img.save(path, format="PPM")


def load_mask(path: str | os.PathLike) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L")) > 127


# -- dataset layouts ---------------------------------------------------------


def load_dataset(root: str | os.PathLike) -> dict[str, dict[str, VideoSequence]]:
    """Read ``<root>/<object_id>/<seq_id>/frame_%04d.png`` into ``{object: {seq: sequence}}``."""
    root = Path(root)
    if not root.is_dir():
        raise MissingDirectoryError(f"missing directory: {root}")
    out: dict[str, dict[str, VideoSequence]] = {}
    for obj_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        seqs = {}
        for seq_dir in sorted(p for p in obj_dir.iterdir() if p.is_dir()):
            seq = load_sequence(seq_dir)
            seqs[seq_dir.name] = VideoSequence(
                f"{obj_dir.name}/{seq_dir.name}", seq.frames, "gallery", {"object": obj_dir.name}
            )
        if seqs:
            out[obj_dir.name] = seqs
    return out


ALOI_VIEWS = 72
ALOI_STEP_DEG = 5


def aloi_view_path(root: str | os.PathLike, object_id: str, view: int) -> Path:
    return Path(root) / object_id / f"view_{view:03d}.png"


def load_aloi_object(root: str | os.PathLike, object_id: str) -> list[Frame]:
    """All 72 views of one ALOI object; view ``v`` is yaw ``5 * v`` degrees."""
    obj_dir = Path(root) / object_id
    if not obj_dir.is_dir():
        raise MissingDirectoryError(f"missing directory: {obj_dir}")
    frames = []
    for v in range(ALOI_VIEWS):
        p = aloi_view_path(root, object_id, v)
        if not p.is_file():
            raise NoFramesError(f"missing view {v} for object {object_id}: {p}")
        frames.append(load_frame(p))
    shape = frames[0].shape
    if any(f.shape != shape for f in frames):
        raise DimensionMismatchError(f"object {object_id}: views have mixed dimensions")
    return frames


def list_aloi_objects(root: str | os.PathLike) -> list[str]:
    root = Path(root)
    if not root.is_dir():
        raise MissingDirectoryError(f"missing directory: {root}")
    return sorted(p.name for p in root.iterdir() if p.is_dir())
