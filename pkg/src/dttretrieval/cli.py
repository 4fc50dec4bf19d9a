"""Command-line entry point: ``dttretrieval <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .aloi import DEFAULT_DELTA_ALPHAS, DEFAULT_DELTA_PHI, METHODS, AloiProtocolConfig, evaluate_aloi
from .codebook import DEFAULT_K, load_codebook, save_codebook
from .densegrid import GridConfig, save_descriptor_grid
from .dtt import DEFAULT_T, load_table, save_table
from .ingest import load_sequence, save_mask_pgm
from .matcher import GalleryModel, rank, write_match_csv
from .pipeline import PipelineConfig, assign_words, fit_codebook, prepare_sequence, train_table
from .scalenorm import rescale_mask
from .segcut import rasterize_foreground
from .synth import synth_generate, write_dataset
from .tracker import export_tracks_csv

log = logging.getLogger("dttretrieval")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--k", type=int, default=DEFAULT_K, help="codebook size")
    g.add_argument("--patch-size", type=int, default=20)
    g.add_argument("--stride-ratio", type=float, default=0.1)
    g.add_argument("--t-threshold", type=float, default=DEFAULT_T,
                   help="normalized frame distance below which frames count as successive")
    g.add_argument("--alpha-smoothing", type=float, default=None, help="additive smoothing (default 1/k)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--no-scale-norm", action="store_true", help="skip flow-based scale normalization")


def _config(args) -> PipelineConfig:
    grid = GridConfig(patch_size=args.patch_size, stride_ratio=args.stride_ratio)
    return PipelineConfig(grid=grid, k=args.k, t=args.t_threshold, alpha=args.alpha_smoothing,
                          scale_norm=not args.no_scale_norm, seed=args.seed)


def _object_id(seq_dir: Path) -> str:
    # <root>/<object_id>/<seq_id>
    return seq_dir.resolve().parent.name


def _prepared(path: Path, cfg: PipelineConfig, role: str = "gallery"):
    return prepare_sequence(load_sequence(path, role), cfg)


def cmd_extract(args) -> int:
    cfg = _config(args)
    p = _prepared(Path(args.sequence), cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, g in enumerate(p.descriptors):
        save_descriptor_grid(g, out / f"frame_{i:04d}.dgrd", cfg.grid)
    with open(out / "scale.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "scale_factor"])
        w.writerows((i, repr(f)) for i, f in enumerate(p.scale_factors))
    print(f"{len(p.descriptors)} frames, {len(p.descriptors[0])} descriptors each -> {out}")
    return 0


def cmd_codebook(args) -> int:
    cfg = _config(args)
    prepared = [_prepared(Path(s), cfg) for s in args.sequences]
    cb = fit_codebook(prepared, cfg)
    save_codebook(cb, args.out)
    print(f"codebook k={cb.k} dim={cb.dim} after {len(cb.history)} iterations -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    cb = load_codebook(args.codebook)
    cfg = _with_codebook_k(cfg, cb.k)
    seq_dir = Path(args.sequence)
    p = _prepared(seq_dir, cfg)
    assign_words(p, cb)
    table = train_table(p, cfg)
    out = Path(args.out) if args.out else Path(f"{args.object_id or _object_id(seq_dir)}.dtt1")
    save_table(table, out)
    print(f"model {out.stem}: {int(table.counts.sum())} transitions from {len(p.sequence)} frames -> {out}")
    return 0


def _with_codebook_k(cfg: PipelineConfig, k: int) -> PipelineConfig:
    return PipelineConfig(cfg.grid, k, cfg.t, cfg.alpha, cfg.scale_norm, cfg.seed, cfg.codebook_points)


def cmd_match(args) -> int:
    cfg = _config(args)
    cb = load_codebook(args.codebook)
    cfg = _with_codebook_k(cfg, cb.k)
    models = []
    if args.models:
        for f in sorted(Path(args.models).glob("*.dtt1")):
            models.append(GalleryModel(f.stem, load_table(f), cb))
    for s in args.gallery or ():
        p = _prepared(Path(s), cfg)
        words = assign_words(p, cb)
        models.append(GalleryModel(_object_id(Path(s)), train_table(p, cfg), cb, {}, words))
    if not models:
        print("no gallery models given (use --models or --gallery)", file=sys.stderr)
        return 2
    if args.symmetric and any(m.word_grids is None for m in models):
        print("--symmetric needs galleries given as sequences (--gallery)", file=sys.stderr)
        return 2
    q = _prepared(Path(args.query), cfg, "query")
    words = assign_words(q, cb)
    qtable = train_table(q, cfg) if args.symmetric else None
    result = rank(words, models, qtable, args.symmetric)
    qid = q.sequence.id
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_match_csv(qid, result, fh)
    else:
        write_match_csv(qid, result, sys.stdout)
    print(f"query {qid}: best {result.best} similarity {result.similarities[result.best]:.4f} "
          f"separation {result.separation:.3f}")
    return 0


def cmd_segment(args) -> int:
    from .matcher import score_detail

    cfg = _config(args)
    cb = load_codebook(args.codebook)
    cfg = _with_codebook_k(cfg, cb.k)
    table = load_table(args.model)
    q = _prepared(Path(args.sequence), cfg, "query")
    words = assign_words(q, cb)
    detail = score_detail(words, table)
    masks = rasterize_foreground(detail.tracks, detail.graph.labels, q.sequence.shape, cfg.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, (m, f) in enumerate(zip(masks, q.scale_factors)):
        # back to the coordinates of the input frame
        save_mask_pgm(rescale_mask(m, 1.0 / f) if f != 1.0 else m, out / f"mask_{i:04d}.pgm")
    export_tracks_csv(detail.tracks, out / "tracks.csv")
    print(f"{detail.n_foreground} of {len(detail.tracks)} tracks foreground, "
          f"similarity {detail.similarity:.4f} -> {out}")
    return 0


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def cmd_evaluate_aloi(args) -> int:
    cfg = _config(args)
    objects = tuple(o for o in args.objects.split(",") if o) if args.objects else None
    origins = tuple(range(0, 360, args.origin_step))
    proto = AloiProtocolConfig(args.delta_phi, _int_list(args.delta_alphas), objects, origins)
    report = evaluate_aloi(args.root, proto, args.method, cfg,
                           progress=(lambda msg: log.info(msg)) if args.verbose else None)
    if args.out:
        report.write_csv(args.out)
    print(report.summary())
    return 0


def cmd_synth(args) -> int:
    items = synth_generate(args.objects, args.sequences, args.seed)
    write_dataset(items, args.out)
    print(f"{len(items)} sequences -> {args.out}")
    return 0


def cmd_bench_synth(args) -> int:
    from .benchmark import run_synth_benchmark

    report = run_synth_benchmark(args.objects, args.sequences, args.seed, pipe=_config(args),
                                 baselines=not args.no_baselines)
    print(report.summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dttretrieval", description="Video object retrieval with descriptor transition tables")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="dense descriptor grids for every frame of a sequence")
    p.add_argument("sequence")
    p.add_argument("--out", required=True, help="output directory for frame_NNNN.dgrd files")
    _common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("codebook", help="k-means codebook over one or more sequences")
    p.add_argument("sequences", nargs="+")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_codebook)

    p = sub.add_parser("train", help="learn a gallery transition table from one sequence")
    p.add_argument("sequence")
    p.add_argument("--codebook", required=True)
    p.add_argument("--object-id")
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("match", help="rank gallery objects for a query sequence")
    p.add_argument("query")
    p.add_argument("--codebook", required=True)
    p.add_argument("--models", help="directory of <object_id>.dtt1 files")
    p.add_argument("--gallery", nargs="*", help="gallery sequence directories <root>/<object_id>/<seq_id>")
    p.add_argument("--symmetric", action="store_true", help="average both scoring directions")
    p.add_argument("--out", help="CSV path (default stdout)")
    _common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("segment", help="foreground masks of a query under one gallery model")
    p.add_argument("sequence")
    p.add_argument("--codebook", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate-aloi", help="sliding-window viewpoint protocol on a turntable set")
    p.add_argument("root")
    p.add_argument("--method", choices=METHODS, default="dtt")
    p.add_argument("--delta-phi", type=int, default=DEFAULT_DELTA_PHI)
    p.add_argument("--delta-alphas", default=",".join(map(str, DEFAULT_DELTA_ALPHAS)))
    p.add_argument("--objects", help="comma-separated object ids (default: all)")
    p.add_argument("--origin-step", type=int, default=5, help="spacing of window origins in degrees")
    p.add_argument("--out", help="per-case CSV")
    _common(p)
    p.set_defaults(func=cmd_evaluate_aloi, no_scale_norm=True)
    p.add_argument("--scale-norm", dest="no_scale_norm", action="store_false",
                   help="enable scale normalization (off by default for turntable data)")

    p = sub.add_parser("synth", help="write the synthetic cluttered benchmark")
    p.add_argument("out")
    p.add_argument("--objects", type=int, default=10)
    p.add_argument("--sequences", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench-synth", help="retrieval benchmark on a freshly generated synthetic set")
    p.add_argument("--objects", type=int, default=10)
    p.add_argument("--sequences", type=int, default=2)
    p.add_argument("--no-baselines", action="store_true", help="score only the transition-table method")
    _common(p)
    p.set_defaults(func=cmd_bench_synth)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
