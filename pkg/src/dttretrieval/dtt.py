"""Descriptor transition tables learnt from possibly-successive frame pairs."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .codebook import WordGrid
from .densegrid import GridConfig
from .ingest import Frame, frame_distance

DEFAULT_T = 0.1


@dataclass
class TransitionTable:
    """Row-stochastic word transition table with additive smoothing.

    ``probs[j, i] = (counts[j, i] + alpha) / (counts[j].sum() + k * alpha)``
    """

    counts: np.ndarray  # (k, k) int64
    alpha: float | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("counts must be a square matrix")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        self.counts = counts.astype(np.int64)
        if self.alpha is None:
            self.alpha = 1.0 / self.k
        if not self.alpha > 0.0:
            raise ValueError("smoothing alpha must be positive")
        row = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        self.probs = (self.counts + self.alpha) / (row + self.k * self.alpha)
        self.log_probs = np.log(self.probs)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @classmethod
    def from_probs(cls, probs: np.ndarray) -> "TransitionTable":
        """Table with explicit probabilities (no counts); used for hand-built models."""
        probs = np.asarray(probs, dtype=np.float64)
        if np.any(probs <= 0.0) or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("probs must be strictly positive and row-stochastic")
        t = cls(np.zeros(probs.shape, dtype=np.int64))
        t.probs = probs.copy()
        t.log_probs = np.log(t.probs)
        return t


def possibly_successive_pairs(frames: Sequence[Frame], t: float = DEFAULT_T) -> list[tuple[int, int]]:
    """Ordered pairs ``(i, j)``, ``i != j``, with ``||I_i - I_j|| / ||I_i|| <= t``."""
    if not t > 0:
        raise ValueError("threshold t must be positive")
    n = len(frames)
    pairs = []
    for i in range(n):
        for j in range(n):
            if i != j and frame_distance(frames[i], frames[j]) <= t:
                pairs.append((i, j))
    return pairs


def mask_at_centers(mask: np.ndarray, grid: WordGrid, cfg: GridConfig) -> np.ndarray:
    """Per-cell flag: does the patch centre fall inside ``mask``?"""
    c = cfg.patch_size // 2
    xs = np.minimum(grid.loci[:, 0] + c, mask.shape[1] - 1)
    ys = np.minimum(grid.loci[:, 1] + c, mask.shape[0] - 1)
    return np.asarray(mask, dtype=bool)[ys, xs]


def count_transitions(
    word_grids: Sequence[WordGrid],
    masks: Sequence[np.ndarray] | None,
    pairs: Sequence[tuple[int, int]],
    k: int,
    cfg: GridConfig = GridConfig(),
) -> np.ndarray:
    counts = np.zeros((k, k), dtype=np.int64)
    if not pairs:
        return counts
    shape = (word_grids[0].grid_w, word_grids[0].grid_h)
    for g in word_grids:
        if (g.grid_w, g.grid_h) != shape:
            raise ValueError("all word grids must share dimensions")
        if g.words.size and (g.words.min() < 0 or g.words.max() >= k):
            raise ValueError(f"word index outside [0, {k})")
    if masks is None:
        inside = [np.ones(len(g.words), dtype=bool) for g in word_grids]
    else:
        inside = [mask_at_centers(m, g, cfg) for m, g in zip(masks, word_grids)]
    flat = np.zeros(k * k, dtype=np.int64)
    for i, j in pairs:
        sel = inside[i] & inside[j]
        idx = word_grids[i].words[sel] * k + word_grids[j].words[sel]
        flat += np.bincount(idx, minlength=k * k)
    return flat.reshape(k, k)


def learn_dtt(
    word_grids: Sequence[WordGrid],
    masks: Sequence[np.ndarray] | None,
    pairs: Sequence[tuple[int, int]],
    k: int,
    alpha: float | None = None,
    cfg: GridConfig = GridConfig(),
) -> TransitionTable:
    """Count same-locus word transitions over ``pairs``, restricted to loci inside both masks."""
    return TransitionTable(count_transitions(word_grids, masks, pairs, k, cfg), alpha)


# -- serialization -----------------------------------------------------------

_MAGIC = b"DTT1"
_VERSION = 1
_HEADER = struct.Struct("<4sHId")


def save_table(table: TransitionTable, path: str | Path) -> None:
    if table.counts.max(initial=0) > np.iinfo(np.uint32).max:
        raise OverflowError("transition counts exceed u32")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, table.k, table.alpha))
        fh.write(np.ascontiguousarray(table.counts, dtype="<u4").tobytes())


def load_table(path: str | Path) -> TransitionTable:
    data = Path(path).read_bytes()
    magic, version, k, alpha = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a transition table file")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported table version {version}")
    counts = np.frombuffer(data, dtype="<u4", offset=_HEADER.size, count=k * k)
    return TransitionTable(counts.reshape(k, k).astype(np.int64), alpha)
