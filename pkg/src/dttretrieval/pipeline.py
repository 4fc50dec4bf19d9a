"""Glue between the stages: sequence preparation, codebook and gallery training."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codebook import DEFAULT_K, Codebook, WordGrid, quantize, train_codebook
from .densegrid import DescriptorGrid, GridConfig, extract_grid
from .dtt import DEFAULT_T, TransitionTable, learn_dtt, possibly_successive_pairs
from .ingest import VideoSequence
from .matcher import GalleryModel
from .scalenorm import normalize_sequence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    grid: GridConfig = GridConfig()
    k: int = DEFAULT_K
    t: float = DEFAULT_T
    alpha: float | None = None  # None means 1/k
    scale_norm: bool = True
    seed: int = 0
    # cap on descriptors fed to k-means (seeded subsample); None uses all
    codebook_points: int | None = 60000


@dataclass
class PreparedSequence:
    sequence: VideoSequence  # after scale normalization
    masks: list[np.ndarray]
    scale_factors: list[float]
    descriptors: list[DescriptorGrid]
    words: list[WordGrid] | None = field(default=None, repr=False)


def prepare_sequence(seq: VideoSequence, cfg: PipelineConfig) -> PreparedSequence:
    norm, masks, factors = normalize_sequence(seq, enabled=cfg.scale_norm, return_factors=True)
    grids = [extract_grid(f, cfg.grid) for f in norm.frames]
    return PreparedSequence(norm, masks, factors, grids)


def fit_codebook(prepared: Sequence[PreparedSequence], cfg: PipelineConfig) -> Codebook:
    desc = np.concatenate([g.descriptors for p in prepared for g in p.descriptors])
    log.info("training codebook k=%d on %d descriptors", cfg.k, len(desc))
    return train_codebook(desc, cfg.k, cfg.seed, max_points=cfg.codebook_points)


def assign_words(p: PreparedSequence, cb: Codebook) -> list[WordGrid]:
    p.words = [quantize(g, cb) for g in p.descriptors]
    return p.words


def train_table(p: PreparedSequence, cfg: PipelineConfig) -> TransitionTable:
    if p.words is None:
        raise ValueError("sequence has not been quantized")
    pairs = possibly_successive_pairs(p.sequence.frames, cfg.t)
    return learn_dtt(p.words, p.masks, pairs, cfg.k, cfg.alpha, cfg.grid)


def train_gallery_model(object_id: str, p: PreparedSequence, cb: Codebook,
                        cfg: PipelineConfig) -> GalleryModel:
    if p.words is None:
        assign_words(p, cb)
    table = train_table(p, cfg)
    meta = {"frames": len(p.sequence), "sequence": p.sequence.id,
            "transitions": int(table.counts.sum())}
    return GalleryModel(object_id, table, cb, meta, p.words)
