"""Track-level foreground/background segmentation by binary min-cut."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import maxflow
import numpy as np

from .densegrid import GridConfig
from .tracker import Track, TrackSet

CONNECT_D2 = 4  # tracks are linked when some frame has squared grid distance < 2**2
MUST_LINK = 1e9

FG, BG = 1, 0


@dataclass
class TrackGraph:
    cost_bg: np.ndarray  # (T,)
    cost_fg: np.ndarray  # (T,)
    edges: np.ndarray  # (E, 2) int, i < j
    weights: np.ndarray  # (E,)
    labels: np.ndarray | None = None  # (T,) FG/BG after segment()
    energy: float | None = field(default=None, compare=False)

    def __post_init__(self):
        self.cost_bg = np.asarray(self.cost_bg, dtype=np.float64)
        self.cost_fg = np.asarray(self.cost_fg, dtype=np.float64)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        n = len(self.cost_bg)
        if self.cost_fg.shape != (n,):
            raise ValueError("unary cost arrays must have equal length")
        if np.any(self.cost_bg < 0) or np.any(self.cost_fg < 0):
            raise ValueError("unary costs must be non-negative")
        if len(self.edges) != len(self.weights):
            raise ValueError("one weight per edge")
        if len(self.edges):
            i, j = self.edges[:, 0], self.edges[:, 1]
            if np.any(i == j) or i.min() < 0 or max(i.max(), j.max()) >= n:
                raise ValueError("edges must join two distinct valid nodes")
            if np.any(self.weights <= 0):
                raise ValueError("edge weights must be positive")
            key = np.minimum(i, j) * n + np.maximum(i, j)
            if len(np.unique(key)) != len(key):
                raise ValueError("duplicate undirected edge")

    @property
    def n_nodes(self) -> int:
        return len(self.cost_bg)

    @property
    def foreground(self) -> np.ndarray:
        if self.labels is None:
            raise ValueError("graph has not been segmented")
        return self.labels == FG


def labeling_energy(graph: TrackGraph, labels: np.ndarray) -> float:
    """Sum of unary costs plus the weights of edges whose ends disagree."""
    labels = np.asarray(labels)
    unary = np.where(labels == FG, graph.cost_fg, graph.cost_bg).sum()
    if len(graph.edges):
        cut = labels[graph.edges[:, 0]] != labels[graph.edges[:, 1]]
        unary += graph.weights[cut].sum()
    return float(unary)


def _pairs_in_frame(xs: np.ndarray, ys: np.ndarray, grid_w: int):
    """All (i, j, d2), i < j, of tracks closer than 2 grid units in one frame."""
    key = ys * (grid_w + 2) + xs  # +2 keeps row wrap-around from aliasing neighbours
    order = np.argsort(key, kind="stable")
    skey = key[order]
    out_i, out_j, out_d = [], [], []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            target = key + dy * (grid_w + 2) + dx
            lo = np.searchsorted(skey, target, side="left")
            hi = np.searchsorted(skey, target, side="right")
            cnt = hi - lo
            if not cnt.any():
                continue
            i = np.repeat(np.arange(len(key)), cnt)
            starts = np.repeat(lo, cnt)
            within = np.arange(len(i)) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            j = order[starts + within]
            keep = i < j
            out_i.append(i[keep])
            out_j.append(j[keep])
            out_d.append(np.full(keep.sum(), dy * dy + dx * dx))
    if not out_i:
        e = np.zeros(0, dtype=np.int64)
        return e, e, e
    return np.concatenate(out_i), np.concatenate(out_j), np.concatenate(out_d)


def build_graph(tracks: TrackSet | Sequence[Track]) -> TrackGraph:
    """Nodes are tracks; unary and coherence costs follow the Markov-chain likelihood."""
    ts = tracks if isinstance(tracks, TrackSet) else TrackSet.from_tracks(tracks)
    t, n = ts.words.shape
    if t == 0:
        raise ValueError("no tracks")
    cost_bg = np.exp(ts.mean_log)
    cost_fg = 1.0 - cost_bg
    lam = 1.0 / n
    gw = int(max(ts.grid_w, ts.xs.max() + 1))
    all_i, all_j, all_w = [], [], []
    for f in range(n):
        i, j, d2 = _pairs_in_frame(ts.xs[:, f], ts.ys[:, f], gw)
        if len(i) == 0:
            continue
        w = np.where(d2 == 0, MUST_LINK, 1.0 / np.maximum(d2, 1))
        all_i.append(i)
        all_j.append(j)
        all_w.append(w)
    if not all_i:
        return TrackGraph(cost_bg, cost_fg, np.zeros((0, 2), dtype=np.int64), np.zeros(0))
    i = np.concatenate(all_i)
    j = np.concatenate(all_j)
    w = np.concatenate(all_w)
    key = i * t + j
    uniq, inv = np.unique(key, return_inverse=True)
    weights = lam * np.bincount(inv, weights=w)
    edges = np.stack([uniq // t, uniq % t], axis=1)
    return TrackGraph(cost_bg, cost_fg, edges, weights)


def segment(graph: TrackGraph) -> TrackGraph:
    """Exact minimum of the binary energy via s-t min-cut (source side = foreground)."""
    n = graph.n_nodes
    g = maxflow.Graph[float](n, max(len(graph.edges), 1))
    nodes = g.add_nodes(n)
    # subtracting the smaller unary cost from both leaves the minimiser unchanged
    base = np.minimum(graph.cost_bg, graph.cost_fg)
    # source capacity is paid when the node ends on the sink (bg) side, and vice versa
    g.add_grid_tedges(nodes, graph.cost_bg - base, graph.cost_fg - base)
    if len(graph.edges):
        w = np.ascontiguousarray(graph.weights, dtype=np.float64)
        g.add_edges(nodes[graph.edges[:, 0]], nodes[graph.edges[:, 1]], w, w)
    g.maxflow()
    sink_side = g.get_grid_segments(nodes)
    labels = np.where(sink_side, BG, FG).astype(np.int64)
    out = TrackGraph(graph.cost_bg, graph.cost_fg, graph.edges, graph.weights, labels)
    out.energy = labeling_energy(out, labels)
    return out


def rasterize_foreground(
    tracks: TrackSet | Sequence[Track],
    labels: np.ndarray,
    frame_shape: tuple[int, int],
    cfg: GridConfig = GridConfig(),
) -> list[np.ndarray]:
    """Per-frame union of the ``s x s`` patch footprints of every foreground track step."""
    ts = tracks if isinstance(tracks, TrackSet) else TrackSet.from_tracks(tracks)
    h, w = frame_shape
    s, d = cfg.patch_size, cfg.stride
    fg = np.flatnonzero(np.asarray(labels) == FG)
    masks = []
    for f in range(ts.n_frames):
        m = np.zeros((h, w), dtype=bool)
        cells = np.unique(np.stack([ts.xs[fg, f], ts.ys[fg, f]], axis=1), axis=0)
        for x, y in cells:
            m[y * d:y * d + s, x * d:x * d + s] = True
        masks.append(m)
    return masks


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)
