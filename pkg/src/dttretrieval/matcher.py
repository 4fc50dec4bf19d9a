"""Query-vs-gallery scoring and ranking."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codebook import Codebook, WordGrid
from .dtt import TransitionTable
from .segcut import TrackGraph, build_graph, segment
from .tracker import TrackSet, infer_track_set

EMPTY_FG_PENALTY = 0.5


@dataclass
class GalleryModel:
    object_id: str
    table: TransitionTable
    codebook: Codebook | None = None
    metadata: dict = field(default_factory=dict)
    # word grids of the training sequence, needed only for symmetric scoring
    word_grids: list[WordGrid] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.codebook is not None and self.codebook.k != self.table.k:
            raise ValueError(f"table k={self.table.k} does not match codebook k={self.codebook.k}")


@dataclass
class ScoreDetail:
    similarity: float
    tracks: TrackSet
    graph: TrackGraph
    n_foreground: int


@dataclass
class MatchResult:
    similarities: dict[str, float]
    ranking: list[str]
    separation: float  # nan when fewer than two gallery models

    @property
    def best(self) -> str:
        return self.ranking[0]


def score_detail(query_word_grids: Sequence[WordGrid], table: TransitionTable) -> ScoreDetail:
    ts = infer_track_set(query_word_grids, table)
    graph = segment(build_graph(ts))
    fg = graph.foreground
    mean_log = ts.mean_log
    if fg.any():
        sim = math.exp(float(mean_log[fg].mean()))
    else:
        sim = math.exp(float(mean_log.mean())) * EMPTY_FG_PENALTY
    return ScoreDetail(sim, ts, graph, int(fg.sum()))


def score(query_word_grids: Sequence[WordGrid], model: GalleryModel,
          query_table: TransitionTable | None = None, symmetric: bool = False) -> float:
    """Similarity in (0, 1]: geometric-mean transition probability over foreground tracks.

    With ``symmetric`` the reverse direction (query table applied to the gallery's
    own training words) is averaged in; it needs ``query_table`` and ``model.word_grids``.
    """
    k = model.table.k
    for g in query_word_grids:
        if g.words.size and g.words.max() >= k:
            raise ValueError(f"query word index exceeds table size k={k}")
    forward = score_detail(query_word_grids, model.table).similarity
    if not symmetric:
        return forward
    if query_table is None or model.word_grids is None:
        raise ValueError("symmetric scoring needs the query table and the gallery word grids")
    backward = score_detail(model.word_grids, query_table).similarity
    return 0.5 * (forward + backward)


def rank_similarities(similarities: dict[str, float]) -> MatchResult:
    """Descending by similarity, ties by gallery id; separation = best / second best."""
    if not similarities:
        raise ValueError("empty gallery")
    ranking = sorted(similarities, key=lambda gid: (-similarities[gid], gid))
    if len(ranking) < 2:
        sep = float("nan")
    else:
        second = similarities[ranking[1]]
        sep = similarities[ranking[0]] / second if second > 0 else float("inf")
    return MatchResult(dict(similarities), ranking, sep)


def rank(query_word_grids: Sequence[WordGrid], models: Sequence[GalleryModel],
         query_table: TransitionTable | None = None, symmetric: bool = False) -> MatchResult:
    if not models:
        raise ValueError("empty gallery")
    sims = {m.object_id: score(query_word_grids, m, query_table, symmetric) for m in models}
    return rank_similarities(sims)


def write_match_csv(query_id: str, result: MatchResult, fh) -> None:
    w = csv.writer(fh)
    w.writerow(["query", "gallery", "similarity", "rank"])
    for r, gid in enumerate(result.ranking, start=1):
        w.writerow([query_id, gid, repr(result.similarities[gid]), r])
    fh.write(f"# separation {result.separation:.6g}\n")


def mean_separation(results: Sequence[MatchResult], truths: Sequence[str]) -> float:
    """Mean best/second ratio over correctly recognised queries (nan if none)."""
    seps = [r.separation for r, t in zip(results, truths) if r.best == t and np.isfinite(r.separation)]
    return float(np.mean(seps)) if seps else float("nan")
