"""Maximum-likelihood descriptor-word tracks under the bound-velocity constraint.

A backward dynamic-programming pass scores, for every grid cell and frame, the
best continuation to the end of the sequence. Following the stored argmax
pointers from each first-frame cell yields its optimal track. Moves are
restricted to the 3x3 grid neighbourhood (displacement norm at most sqrt(2)).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .codebook import WordGrid
from .dtt import TransitionTable

# lexicographic (dy, dx) order gives the (y, x) successor tie rule
OFFSETS = tuple((dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1))


@dataclass
class Track:
    words: np.ndarray  # (N,)
    xs: np.ndarray  # (N,) grid column
    ys: np.ndarray  # (N,) grid row
    log_likelihood: float

    @property
    def steps(self) -> list[tuple[int, int, int]]:
        return [(int(w), int(x), int(y)) for w, x, y in zip(self.words, self.xs, self.ys)]

    def __len__(self) -> int:
        return len(self.words)

    @property
    def mean_log(self) -> float:
        n = len(self.words)
        return self.log_likelihood / (n - 1) if n > 1 else 0.0


@dataclass
class TrackSet:
    """All tracks of one query as stacked arrays (T tracks, N frames)."""

    words: np.ndarray  # (T, N)
    xs: np.ndarray  # (T, N)
    ys: np.ndarray  # (T, N)
    log_likelihood: np.ndarray  # (T,)
    grid_w: int
    grid_h: int

    def __len__(self) -> int:
        return self.words.shape[0]

    @property
    def n_frames(self) -> int:
        return self.words.shape[1]

    @property
    def mean_log(self) -> np.ndarray:
        n = self.n_frames
        return self.log_likelihood / (n - 1) if n > 1 else np.zeros(len(self))

    def tracks(self) -> list[Track]:
        return [Track(self.words[i], self.xs[i], self.ys[i], float(self.log_likelihood[i]))
                for i in range(len(self))]

    @classmethod
    def from_tracks(cls, tracks: Sequence[Track], grid_w: int | None = None,
                    grid_h: int | None = None) -> "TrackSet":
        if not tracks:
            raise ValueError("no tracks")
        n = len(tracks[0])
        if any(len(t) != n for t in tracks):
            raise ValueError("tracks must all have the same length")
        xs = np.array([t.xs for t in tracks], dtype=np.int64)
        ys = np.array([t.ys for t in tracks], dtype=np.int64)
        return cls(
            np.array([t.words for t in tracks], dtype=np.int64), xs, ys,
            np.array([t.log_likelihood for t in tracks], dtype=np.float64),
            grid_w if grid_w is not None else int(xs.max()) + 1,
            grid_h if grid_h is not None else int(ys.max()) + 1,
        )


def _check(word_grids: Sequence[WordGrid], k: int) -> tuple[int, int]:
    if not word_grids:
        raise ValueError("need at least one frame")
    gw, gh = word_grids[0].grid_w, word_grids[0].grid_h
    if gw * gh == 0:
        raise ValueError("empty grid")
    for g in word_grids:
        if (g.grid_w, g.grid_h) != (gw, gh):
            raise ValueError("all word grids must share dimensions")
        if g.words.min() < 0 or g.words.max() >= k:
            raise ValueError(f"word index outside the table's range [0, {k})")
    return gw, gh


def infer_track_set(word_grids: Sequence[WordGrid], table: TransitionTable) -> TrackSet:
    gw, gh = _check(word_grids, table.k)
    n = len(word_grids)
    logt = table.log_probs
    words = np.stack([g.as_array() for g in word_grids])  # (N, gh, gw)

    value = np.zeros((gh, gw))
    # successor pointer per (frame, cell): index into OFFSETS
    ptr = np.zeros((max(n - 1, 0), gh, gw), dtype=np.int8)
    for t in range(n - 2, -1, -1):
        best = np.full((gh, gw), -np.inf)
        arg = np.zeros((gh, gw), dtype=np.int8)
        w_here = words[t]
        for o, (dy, dx) in enumerate(OFFSETS):
            # cells (y, x) whose successor (y+dy, x+dx) is on the grid
            ys0, ys1 = max(0, -dy), gh - max(0, dy)
            xs0, xs1 = max(0, -dx), gw - max(0, dx)
            if ys0 >= ys1 or xs0 >= xs1:
                continue
            src = (slice(ys0, ys1), slice(xs0, xs1))
            dst = (slice(ys0 + dy, ys1 + dy), slice(xs0 + dx, xs1 + dx))
            cand = logt[w_here[src], words[t + 1][dst]] + value[dst]
            region = best[src]
            better = cand > region
            region[better] = cand[better]
            arg[src][better] = o
        value = best
        ptr[t] = arg

    ys0, xs0 = np.mgrid[0:gh, 0:gw]
    ys = np.empty((gh * gw, n), dtype=np.int64)
    xs = np.empty((gh * gw, n), dtype=np.int64)
    ys[:, 0] = ys0.ravel()
    xs[:, 0] = xs0.ravel()
    off = np.array(OFFSETS, dtype=np.int64)
    for t in range(n - 1):
        o = ptr[t][ys[:, t], xs[:, t]]
        ys[:, t + 1] = ys[:, t] + off[o, 0]
        xs[:, t + 1] = xs[:, t] + off[o, 1]
    tw = words[np.arange(n)[None, :], ys, xs]
    return TrackSet(tw, xs, ys, value.ravel().copy(), gw, gh)


def infer_tracks(word_grids: Sequence[WordGrid], table: TransitionTable) -> list[Track]:
    """One optimal track per first-frame grid cell, in row-major start order."""
    return infer_track_set(word_grids, table).tracks()


def path_log_likelihood(words: np.ndarray, table: TransitionTable) -> float:
    """Sum of log transition probabilities along a word path, accumulated right to left."""
    total = 0.0
    for a, b in reversed(list(zip(words[:-1], words[1:]))):
        total = table.log_probs[a, b] + total
    return float(total)


def export_tracks_csv(tracks: TrackSet | Sequence[Track], path: str | Path) -> None:
    ts = tracks if isinstance(tracks, TrackSet) else TrackSet.from_tracks(tracks)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["track", "frame", "x", "y", "word"])
        for i in range(len(ts)):
            for n in range(ts.n_frames):
                w.writerow([i, n, int(ts.xs[i, n]), int(ts.ys[i, n]), int(ts.words[i, n])])
