"""Visual vocabulary: k-means++ / Lloyd training and nearest-centroid quantization."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .densegrid import DescriptorGrid

DEFAULT_K = 500
MAX_ITER = 100
REL_TOL = 1e-4
_CHUNK = 4096


@dataclass
class Codebook:
    centroids: np.ndarray  # (k, dim)
    seed: int = 0
    # distortion after each assignment step, kept for diagnostics
    history: list[float] = field(default_factory=list, compare=False)

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 2:
            raise ValueError("a codebook needs at least 2 centroids")
        if not np.all(np.isfinite(c)):
            raise ValueError("centroids must be finite")
        self.centroids = c

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass
class WordGrid:
    grid_w: int
    grid_h: int
    words: np.ndarray  # (n,) int64, row-major
    loci: np.ndarray  # (n, 2)

    def __post_init__(self):
        self.words = np.asarray(self.words, dtype=np.int64)
        if self.words.shape != (self.grid_w * self.grid_h,):
            raise ValueError("words length must equal grid_w * grid_h")

    def as_array(self) -> np.ndarray:
        """Words reshaped to ``(grid_h, grid_w)``."""
        return self.words.reshape(self.grid_h, self.grid_w)


def _sq_dists(x: np.ndarray, c: np.ndarray, c_sq: np.ndarray) -> np.ndarray:
    d = (x * x).sum(axis=1)[:, None] - 2.0 * (x @ c.T) + c_sq[None, :]
    return np.maximum(d, 0.0)


def nearest_centroid(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of and squared distance to the nearest centroid; ties go to the lowest index.

    The fast expanded form picks candidates, then near-ties are re-resolved with
    exact differences so that the tie rule does not depend on rounding.
    """
    x = np.asarray(x, dtype=np.float64)
    c_sq = (centroids * centroids).sum(axis=1)
    labels = np.empty(len(x), dtype=np.int64)
    best = np.empty(len(x))
    for lo in range(0, len(x), _CHUNK):
        xb = x[lo:lo + _CHUNK]
        d = _sq_dists(xb, centroids, c_sq)
        dmin = d.min(axis=1)
        slack = 1e-9 * (1.0 + dmin + (xb * xb).sum(axis=1))
        near = d <= (dmin + slack)[:, None]
        multi = np.flatnonzero(near.sum(axis=1) > 1)
        lab = d.argmin(axis=1)
        dist = dmin.copy()
        for r in multi:
            cand = np.flatnonzero(near[r])
            exact = ((centroids[cand] - xb[r]) ** 2).sum(axis=1)
            j = int(np.argmin(exact))
            lab[r] = cand[j]
            dist[r] = exact[j]
        single = np.setdiff1d(np.arange(len(xb)), multi)
        if len(single):
            dist[single] = ((centroids[lab[single]] - xb[single]) ** 2).sum(axis=1)
        labels[lo:lo + _CHUNK] = lab
        best[lo:lo + _CHUNK] = dist
    return labels, best


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    idx = [int(rng.integers(n))]
    d2 = ((x - x[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            raise ValueError("fewer distinct points than clusters")
        i = int(rng.choice(n, p=d2 / total))
        idx.append(i)
        d2 = np.minimum(d2, ((x - x[i]) ** 2).sum(axis=1))
    return x[idx].copy()


def train_codebook(
    descriptors: np.ndarray,
    k: int = DEFAULT_K,
    seed: int = 0,
    max_iter: int = MAX_ITER,
    tol: float = REL_TOL,
    max_points: int | None = None,
) -> Codebook:
    """k-means++ seeding followed by Lloyd iterations.

    All-zero descriptors (flat patches) are dropped before training. With
    ``max_points`` set, a seeded uniform subsample of that size is used.
    """
    x = np.asarray(descriptors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("descriptors must be a 2D array")
    x = x[np.any(x != 0.0, axis=1)]
    rng = np.random.default_rng(seed)
    if max_points is not None and len(x) > max_points:
        x = x[np.sort(rng.choice(len(x), size=max_points, replace=False))]
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(x) < k or len(np.unique(x, axis=0)) < k:
        raise ValueError(f"need at least k={k} distinct non-zero descriptors")

    centroids = kmeans_pp_init(x, k, rng)
    history: list[float] = []
    prev = None
    for _ in range(max_iter):
        labels, d2 = nearest_centroid(x, centroids)
        distortion = float(d2.sum())
        if history and distortion > history[-1] * (1.0 + 1e-12) + 1e-12:
            raise AssertionError(f"k-means distortion increased: {history[-1]} -> {distortion}")
        history.append(distortion)
        if prev is not None and (prev == 0.0 or abs(prev - distortion) / prev < tol):
            break
        prev = distortion

        counts = np.bincount(labels, minlength=k)
        nonempty = counts > 0
        # fixed-order reduction: points grouped by label in input order
        order = np.argsort(labels, kind="stable")
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])[nonempty]
        sums = np.add.reduceat(x[order], starts, axis=0)
        centroids[nonempty] = sums / counts[nonempty, None]
        empty = np.flatnonzero(~nonempty)
        if len(empty):
            order = np.argsort(-d2, kind="stable")
            for j, p in zip(empty, order):
                centroids[j] = x[p]
    return Codebook(centroids, seed, history)


def quantize(grid: DescriptorGrid, cb: Codebook) -> WordGrid:
    if grid.descriptors.shape[1] != cb.dim:
        raise ValueError(f"descriptor dim {grid.descriptors.shape[1]} != codebook dim {cb.dim}")
    words, _ = nearest_centroid(grid.descriptors, cb.centroids)
    return WordGrid(grid.grid_w, grid.grid_h, words, grid.loci)


# -- serialization -----------------------------------------------------------

_MAGIC = b"DTTC"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIq")


def save_codebook(cb: Codebook, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, cb.k, cb.dim, cb.seed))
        fh.write(np.ascontiguousarray(cb.centroids, dtype="<f8").tobytes())


def load_codebook(path: str | Path) -> Codebook:
    data = Path(path).read_bytes()
    magic, version, k, dim, seed = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a codebook file")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported codebook version {version}")
    c = np.frombuffer(data, dtype="<f8", offset=_HEADER.size, count=k * dim)
    return Codebook(c.reshape(k, dim).copy(), seed)


def export_codebook_csv(cb: Codebook, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["word"] + [f"d{i}" for i in range(cb.dim)])
        for i, row in enumerate(cb.centroids):
            w.writerow([i] + [repr(float(v)) for v in row])
