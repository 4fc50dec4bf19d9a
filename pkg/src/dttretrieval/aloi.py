"""Sliding-window viewpoint protocol over turntable image sets.

Every object contributes 72 views spaced 5 degrees apart. For an origin
``alpha`` the training window holds the views in ``[alpha, alpha + dphi)`` and
the query window for shift ``dalpha`` the views in
``[alpha + dalpha, alpha + dalpha + dphi)``, both taken modulo 360. Galleries
are retrained for every origin; queries are scored against the galleries of
the same origin.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .baselines import FeatureSet, appearance_features, maxmax_cosine
from .codebook import Codebook, WordGrid, quantize, train_codebook
from .densegrid import DescriptorGrid, extract_grid
from .dtt import learn_dtt, possibly_successive_pairs
from .ingest import ALOI_STEP_DEG, ALOI_VIEWS, Frame, VideoSequence, list_aloi_objects, load_aloi_object
from .matcher import MatchResult, rank_similarities, score_detail
from .pipeline import PipelineConfig, prepare_sequence

log = logging.getLogger(__name__)

METHODS = ("dtt", "sift-cos", "app-cos")
DEFAULT_DELTA_PHI = 40
DEFAULT_DELTA_ALPHAS = tuple(range(0, 75, 5))


def _check_multiple(name: str, value: int) -> None:
    if value % ALOI_STEP_DEG != 0:
        raise ValueError(f"{name}={value} is not a multiple of {ALOI_STEP_DEG} degrees")


@dataclass(frozen=True)
class AloiProtocolConfig:
    delta_phi: int = DEFAULT_DELTA_PHI
    delta_alphas: tuple[int, ...] = DEFAULT_DELTA_ALPHAS
    objects: tuple[str, ...] | None = None  # None: every object under the root
    origins: tuple[int, ...] | None = None  # degrees; None: all 72 origins

    def __post_init__(self):
        _check_multiple("delta_phi", self.delta_phi)
        if self.delta_phi < ALOI_STEP_DEG:
            raise ValueError("delta_phi must be at least one view step")
        for a in self.delta_alphas:
            _check_multiple("delta_alpha", a)
        for a in self.origin_list():
            _check_multiple("alpha", a)

    def origin_list(self) -> tuple[int, ...]:
        if self.origins is None:
            return tuple(range(0, 360, ALOI_STEP_DEG))
        return tuple(self.origins)


def window_indices(alpha: int, delta_phi: int, n_views: int = ALOI_VIEWS) -> list[int]:
    start = alpha // ALOI_STEP_DEG
    return [(start + i) % n_views for i in range(delta_phi // ALOI_STEP_DEG)]


def aloi_windows(views: Sequence, alpha: int, delta_phi: int, delta_alpha: int) -> tuple[list, list]:
    """Half-open train and query windows, wrapping around the full turn."""
    for name, v in (("alpha", alpha), ("delta_phi", delta_phi), ("delta_alpha", delta_alpha)):
        _check_multiple(name, v)
    n = len(views)
    train = [views[i] for i in window_indices(alpha, delta_phi, n)]
    query = [views[i] for i in window_indices(alpha + delta_alpha, delta_phi, n)]
    return train, query


@dataclass(frozen=True)
class CaseResult:
    object_id: str
    alpha: int
    delta_alpha: int
    best: str
    separation: float

    @property
    def correct(self) -> bool:
        return self.best == self.object_id


@dataclass
class EvalReport:
    method: str
    delta_phi: int
    cases: list[CaseResult]
    runtime: dict[str, float] = field(default_factory=dict)

    def delta_alphas(self) -> list[int]:
        return sorted({c.delta_alpha for c in self.cases})

    def rank1(self) -> dict[int, float]:
        out = {}
        for da in self.delta_alphas():
            hits = [c.correct for c in self.cases if c.delta_alpha == da]
            out[da] = float(np.mean(hits))
        return out

    def counts(self) -> dict[int, int]:
        return {da: sum(c.delta_alpha == da for c in self.cases) for da in self.delta_alphas()}

    def separations(self) -> dict[int, list[float]]:
        return {da: [c.separation for c in self.cases if c.delta_alpha == da] for da in self.delta_alphas()}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "object", "alpha", "delta_alpha", "best", "correct", "separation"])
            for c in self.cases:
                w.writerow([self.method, c.object_id, c.alpha, c.delta_alpha, c.best, int(c.correct),
                            repr(c.separation)])

    def summary(self) -> str:
        lines = [f"method {self.method}  delta_phi {self.delta_phi}"]
        counts = self.counts()
        for da, r in self.rank1().items():
            seps = [s for s in self.separations()[da] if np.isfinite(s)]
            med = float(np.median(seps)) if seps else float("nan")
            lines.append(f"  dalpha {da:3d}  rank1 {r:.3f}  n {counts[da]}  median separation {med:.3f}")
        for k, v in self.runtime.items():
            lines.append(f"  {k} {v:.1f}s")
        return "\n".join(lines)


# Per-view representations are computed once and shared by every window.
@dataclass
class _ViewCache:
    frames: dict[str, list[Frame]]
    grids: dict[str, list[DescriptorGrid]] = field(default_factory=dict)
    words: dict[str, list[WordGrid]] = field(default_factory=dict)
    appearance: dict[str, np.ndarray] = field(default_factory=dict)


def _sequence(object_id: str, frames: Sequence[Frame], tag: str) -> VideoSequence:
    return VideoSequence(f"{object_id}@{tag}", tuple(frames), "gallery", {"object": object_id})


def _window_frames(views: Sequence[Frame], alpha: int, dphi: int) -> list[Frame]:
    return [views[i] for i in window_indices(alpha, dphi, len(views))]


class _Scorer:
    """Builds galleries for one origin and scores query windows against them."""

    def __init__(self, method: str, cache: _ViewCache, cfg: AloiProtocolConfig,
                 pipe: PipelineConfig, codebook: Codebook | None):
        self.method, self.cache, self.cfg, self.pipe, self.codebook = method, cache, cfg, pipe, codebook

    def _window_words(self, oid: str, alpha: int) -> tuple[list[WordGrid], list[Frame], list | None]:
        idx = window_indices(alpha, self.cfg.delta_phi, len(self.cache.frames[oid]))
        frames = [self.cache.frames[oid][i] for i in idx]
        if self.pipe.scale_norm:
            p = prepare_sequence(_sequence(oid, frames, str(alpha)), self.pipe)
            return [quantize(g, self.codebook) for g in p.descriptors], list(p.sequence.frames), p.masks
        return [self.cache.words[oid][i] for i in idx], frames, None

    def _window_features(self, oid: str, alpha: int) -> FeatureSet:
        idx = window_indices(alpha, self.cfg.delta_phi, len(self.cache.frames[oid]))
        if self.method == "app-cos":
            return FeatureSet(self.cache.appearance[oid][idx], "appearance")
        vecs = np.concatenate([self.cache.grids[oid][i].descriptors for i in idx])
        return FeatureSet(vecs[np.any(vecs != 0.0, axis=1)], "sift")

    def gallery(self, objects: Sequence[str], alpha: int):
        if self.method == "dtt":
            tables = {}
            for oid in objects:
                words, frames, masks = self._window_words(oid, alpha)
                pairs = possibly_successive_pairs(frames, self.pipe.t)
                tables[oid] = learn_dtt(words, masks, pairs, self.codebook.k, self.pipe.alpha, self.pipe.grid)
            return tables
        return {oid: self._window_features(oid, alpha) for oid in objects}

    def query(self, gallery, oid: str, alpha: int) -> MatchResult:
        if self.method == "dtt":
            words, _, _ = self._window_words(oid, alpha)
            sims = {gid: score_detail(words, table).similarity for gid, table in gallery.items()}
        else:
            q = self._window_features(oid, alpha)
            sims = {gid: maxmax_cosine(q, f) for gid, f in gallery.items()}
        return rank_similarities(sims)


def _build_cache(root: Path, objects: Sequence[str], method: str, pipe: PipelineConfig) -> _ViewCache:
    cache = _ViewCache({oid: load_aloi_object(root, oid) for oid in objects})
    if method == "app-cos":
        for oid, views in cache.frames.items():
            seq = _sequence(oid, views, "all")
            cache.appearance[oid] = appearance_features(seq).vectors
        return cache
    for oid, views in cache.frames.items():
        cache.grids[oid] = [extract_grid(f, pipe.grid) for f in views]
    return cache


def evaluate_aloi(
    root: str | Path,
    cfg: AloiProtocolConfig = AloiProtocolConfig(),
    method: str = "dtt",
    pipeline: PipelineConfig | None = None,
    shuffle_seed: int | None = None,
    progress: Callable[[str], None] | None = None,
) -> EvalReport:
    """Run the protocol; ``shuffle_seed`` permutes the evaluation order (results must not change)."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    root = Path(root)
    pipe = pipeline if pipeline is not None else PipelineConfig(scale_norm=False)
    objects = list(cfg.objects) if cfg.objects is not None else list_aloi_objects(root)
    if len(objects) < 1:
        raise ValueError(f"no objects under {root}")
    t0 = time.perf_counter()
    cache = _build_cache(root, objects, method, pipe)
    codebook = None
    if method == "dtt":
        # one global codebook over every view; with all origins each view is in some training window
        desc = np.concatenate([g.descriptors for oid in objects for g in cache.grids[oid]])
        codebook = train_codebook(desc, pipe.k, pipe.seed, max_points=pipe.codebook_points)
        for oid in objects:
            cache.words[oid] = [quantize(g, codebook) for g in cache.grids[oid]]
    runtime = {"features": time.perf_counter() - t0}

    origins = list(cfg.origin_list())
    if shuffle_seed is not None:
        np.random.default_rng(shuffle_seed).shuffle(origins)
    scorer = _Scorer(method, cache, cfg, pipe, codebook)
    results: dict[tuple[str, int, int], CaseResult] = {}
    t1 = time.perf_counter()
    for alpha in origins:
        gallery = scorer.gallery(objects, alpha)
        jobs = [(oid, da) for oid in objects for da in cfg.delta_alphas]
        if shuffle_seed is not None:
            np.random.default_rng([shuffle_seed, alpha]).shuffle(jobs)
        for oid, da in jobs:
            r = scorer.query(gallery, oid, (alpha + da) % 360)
            results[(oid, alpha, da)] = CaseResult(oid, alpha, da, r.best, r.separation)
        if progress is not None:
            progress(f"origin {alpha} done ({len(results)} cases)")
    runtime["scoring"] = time.perf_counter() - t1
    # deterministic reduction keyed by case id
    cases = [results[key] for key in sorted(results, key=lambda k: (k[2], k[0], k[1]))]
    return EvalReport(method, cfg.delta_phi, cases, runtime)
