"""Command-line entry point: generate, rasterize, extract, metrics, compare, roundtrip."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from .config import ConfigError, PipelineConfig, load_config, read_config_file
from .metrics import CorpusStats, EmptyCorpus, compare_stats, merge_samples, write_svgs
from .pipeline import extract_video, extraction_samples, is_extraction_dir, read_extraction, write_extraction
from .raster import VideoReadError, rasterize_scene, read_video, write_video
from .roundtrip import run_roundtrip
from .scene import SceneValidationError, iter_scene_files, load_scene, validate_scene
from .synthetic import GenParams, InfeasibleParams, generate_corpus, write_corpus

log = logging.getLogger("bevtraj")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_PARTIAL, EXIT_THRESHOLD = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def color_seed(seed: int, scene_id: str) -> int:
    """Per-scene color seed, stable across runs and independent of batch order."""
    return (seed + zlib.crc32(scene_id.encode("utf-8"))) & 0xFFFFFFFF


def _gen_params(cfg: PipelineConfig, params_file: str | None, seed: int | None) -> GenParams:
    params = cfg.generator
    if params_file:
        d = read_config_file(params_file)
        d = d.get("generator", d)
        try:
            params = GenParams.from_dict({**params.to_dict(), **d})
        except TypeError as exc:
            raise ConfigError(f"{params_file}: {exc}") from exc
    if seed is not None:
        params = replace(params, seed=seed)
    return params


def _map(fn, items, jobs: int):
    """Ordered map, in worker processes when jobs > 1."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _require_inputs(inputs) -> None:
    missing = [str(p) for p in inputs if not Path(p).exists()]
    if missing:
        raise FileNotFoundError(f"no such input: {', '.join(missing)}")


def _batch_status(results: list[tuple[str, str | None]]) -> int:
    failed = [(name, err) for name, err in results if err]
    for name, err in failed:
        print(f"{name}: {err}", file=sys.stderr)
    if not failed:
        return EXIT_OK
    return EXIT_PARTIAL if len(failed) < len(results) else EXIT_INVALID


# --------------------------------------------------------------------------
# commands

def cmd_generate(args, cfg: PipelineConfig) -> int:
    n = cfg.n_scenes if args.n is None else args.n
    if n < 1:
        raise UsageError("--n must be at least 1")
    params = _gen_params(cfg, args.params, args.seed)
    scenes = generate_corpus(params, n)
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    files = write_corpus(scenes, params, args.out, created_utc=stamp)
    print(f"wrote {len(files)} scenes to {args.out}")
    return EXIT_OK


def _rasterize_one(job) -> tuple[str, str | None]:
    path, out, seed, cfg = job
    try:
        scene = validate_scene(load_scene(path))
    except SceneValidationError as exc:
        return str(path), str(exc)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return str(path), f"cannot read scene: {exc}"
    video = rasterize_scene(scene, cfg.raster, color_seed(seed, scene.scene_id), cfg.colors)
    write_video(video, Path(out) / scene.scene_id)
    return str(path), None


def cmd_rasterize(args, cfg: PipelineConfig) -> int:
    _require_inputs(args.inputs)
    files = iter_scene_files(args.inputs)
    if not files:
        raise UsageError("no scene files given")
    seed = 0 if args.seed is None else args.seed
    results = _map(_rasterize_one, [(f, args.out, seed, cfg) for f in files], args.jobs)
    print(f"rasterized {sum(e is None for _, e in results)} of {len(results)} scenes into {args.out}")
    return _batch_status(results)


def _video_dirs(inputs) -> list[Path]:
    out = []
    for p in map(Path, inputs):
        if any(p.glob("frame_*.png")) or (p / "manifest.json").exists():
            out.append(p)
        elif p.is_dir():
            out.extend(sorted(d for d in p.iterdir() if d.is_dir()))
        else:
            out.append(p)
    return out


def _extract_one(job) -> tuple[str, str | None]:
    vdir, out, cfg = job
    try:
        video = read_video(vdir)
    except (VideoReadError, OSError, ValueError) as exc:
        return str(vdir), f"skipped: {exc}"
    ext = extract_video(video, cfg)
    write_extraction(ext, Path(out) / vdir.name)
    return str(vdir), None


def cmd_extract(args, cfg: PipelineConfig) -> int:
    _require_inputs(args.inputs)
    dirs = _video_dirs(args.inputs)
    if not dirs:
        raise UsageError("no video directories given")
    results = _map(_extract_one, [(d, args.out, cfg) for d in dirs], args.jobs)
    print(f"extracted {sum(e is None for _, e in results)} of {len(results)} videos into {args.out}")
    return _batch_status(results)


def _extraction_dirs(inputs) -> list[Path]:
    out = []
    for p in map(Path, inputs):
        if is_extraction_dir(p):
            out.append(p)
        elif p.is_dir():
            out.extend(sorted(d for d in p.iterdir() if is_extraction_dir(d)))
    return out


def _samples_one(job):
    d, cfg = job
    return extraction_samples(read_extraction(d, cfg.raster), cfg)


def cmd_metrics(args, cfg: PipelineConfig) -> int:
    _require_inputs(args.inputs)
    dirs = _extraction_dirs(args.inputs)
    if not dirs:
        raise EmptyCorpus(f"no extraction outputs under {', '.join(map(str, args.inputs))}")
    samples = merge_samples(_map(_samples_one, [(d, cfg) for d in dirs], args.jobs))
    if not any(samples.values()):
        raise EmptyCorpus("extraction outputs hold no samples")
    stats = CorpusStats.from_samples(samples, cfg.bins)
    stats.save(args.out)
    if args.svg:
        write_svgs(args.out, {Path(args.out).name or "corpus": stats})
    print(f"stats for {len(dirs)} videos written to {args.out}")
    return EXIT_OK


def cmd_compare(args, cfg: PipelineConfig) -> int:
    try:
        a, b = CorpusStats.load(args.stats_a), CorpusStats.load(args.stats_b)
    except (OSError, KeyError, ValueError) as exc:
        print(f"cannot read stats: {exc}", file=sys.stderr)
        return EXIT_INVALID
    result = compare_stats(a, b)
    out = Path(args.out)
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        if args.svg:
            write_svgs(out, {"a": a, "b": b})
        out = out / "divergence.json"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    for m, r in result["metrics"].items():
        print(f"{m:20s} KS {r['ks']:.4f}  W1 {r['wasserstein']:.4f}")
    if result["incomparable"]:
        print("incomparable: " + ", ".join(result["incomparable"]))
    return EXIT_OK


def cmd_roundtrip(args, cfg: PipelineConfig) -> int:
    n = cfg.n_scenes if args.n is None else args.n
    if n < 1:
        raise UsageError("--n must be at least 1")
    params = _gen_params(cfg, args.params, args.seed)
    cfg = replace(cfg, generator=params)

    def progress(k, total):
        if not args.quiet:
            print(f"\r{k}/{total} scenes", end="", file=sys.stderr, flush=True)

    rep = run_roundtrip(cfg, n, progress=progress)
    if not args.quiet:
        print(file=sys.stderr)
    text = json.dumps(rep, indent=2) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "roundtrip.json").write_text(text, encoding="utf-8")
    for k, c in rep["checks"].items():
        v = "n/a" if c["value"] is None else f"{c['value']:.4f}"
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {k:24s} {v:>8s}  (limit {c['threshold']})")
    return EXIT_OK if rep["pass"] else EXIT_THRESHOLD


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file (default: $BEVTRAJ_CONFIG)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for batch commands")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="bevtraj", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic scene corpus")
    g.add_argument("--params", help="generator parameters (TOML or JSON)")
    g.add_argument("--n", type=int, help="number of scenes")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("rasterize", parents=[common], help="render scenes into PNG frame directories")
    r.add_argument("inputs", nargs="+", help="scene files or directories of them")
    r.add_argument("--seed", type=int, help="agent color seed")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_rasterize)

    e = sub.add_parser("extract", parents=[common], help="detect and track objects in videos")
    e.add_argument("inputs", nargs="+", help="video directories or their parent")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_extract)

    m = sub.add_parser("metrics", parents=[common], help="histogram statistics over extraction outputs")
    m.add_argument("inputs", nargs="+", help="extraction directories or their parent")
    m.add_argument("--out", required=True)
    m.add_argument("--svg", action="store_true", help="also write one SVG plot per metric")
    m.set_defaults(func=cmd_metrics)

    c = sub.add_parser("compare", parents=[common], help="KS and Wasserstein between two stats files")
    c.add_argument("stats_a")
    c.add_argument("stats_b")
    c.add_argument("--out", required=True, help="report .json file or output directory")
    c.add_argument("--svg", action="store_true", help="overlay plots (directory output only)")
    c.set_defaults(func=cmd_compare)

    t = sub.add_parser("roundtrip", parents=[common], help="generate, render, extract and score against truth")
    t.add_argument("--params", help="generator parameters (TOML or JSON)")
    t.add_argument("--n", type=int, help="number of scenes")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="directory for roundtrip.json")
    t.add_argument("-q", "--quiet", action="store_true")
    t.set_defaults(func=cmd_roundtrip)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, InfeasibleParams, SceneValidationError, EmptyCorpus) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
