"""Set-to-set baselines: max-max cosine over dense SIFT or raw appearance vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .densegrid import GridConfig, extract_grid
from .ingest import VideoSequence

APPEARANCE_SIZE = (32, 24)  # (width, height)
_CHUNK = 2048


@dataclass
class FeatureSet:
    vectors: np.ndarray  # (n, d)
    source: str = "sift"

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or len(v) == 0:
            raise ValueError("a feature set needs at least one vector")
        if np.any(~np.any(v != 0.0, axis=1)):
            raise ValueError("feature sets may not contain all-zero vectors")
        self.vectors = v

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def maxmax_cosine(a: FeatureSet, b: FeatureSet) -> float:
    """max over (f1, f2) in a x b of the cosine of the angle between f1 and f2."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    an = a.vectors / np.linalg.norm(a.vectors, axis=1, keepdims=True)
    bn = b.vectors / np.linalg.norm(b.vectors, axis=1, keepdims=True)
    best = -np.inf
    for lo in range(0, len(an), _CHUNK):
        best = max(best, float((an[lo:lo + _CHUNK] @ bn.T).max()))
    return float(np.clip(best, -1.0, 1.0))


def box_downscale(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Area-average resampling: each output pixel is the mean of its source footprint."""
    h, w = img.shape
    ys = np.linspace(0.0, h, out_h + 1)
    xs = np.linspace(0.0, w, out_w + 1)

    def weights(edges, n):
        m = np.zeros((len(edges) - 1, n))
        for o in range(len(edges) - 1):
            lo, hi = edges[o], edges[o + 1]
            for p in range(int(np.floor(lo)), min(int(np.ceil(hi)), n)):
                m[o, p] = max(0.0, min(hi, p + 1) - max(lo, p))
            m[o] /= hi - lo
        return m

    return weights(ys, h) @ img @ weights(xs, w).T


def appearance_features(seq: VideoSequence, size: tuple[int, int] = APPEARANCE_SIZE) -> FeatureSet:
    out_w, out_h = size
    vecs = []
    for f in seq.frames:
        v = box_downscale(f.luma, out_w, out_h).ravel()
        v = v - v.mean()
        if np.any(np.abs(v) > 1e-12):
            vecs.append(v)
    if not vecs:
        raise ValueError(f"sequence {seq.id!r} has no non-constant frames")
    return FeatureSet(np.array(vecs), "appearance")


def sift_features(seq: VideoSequence, cfg: GridConfig = GridConfig()) -> FeatureSet:
    desc = np.concatenate([extract_grid(f, cfg).descriptors for f in seq.frames])
    desc = desc[np.any(desc != 0.0, axis=1)]
    if len(desc) == 0:
        raise ValueError(f"sequence {seq.id!r} has no textured patches")
    return FeatureSet(desc, "sift")

