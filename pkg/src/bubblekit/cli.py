"""Command-line entry points for the pipeline stages.

    bubblekit generate  --out run --preset default --seed 7
    bubblekit summarize --out run --grid 64x8x64 --gamma 0.3 --cluster 3x3x3
    bubblekit extract   --out run --threshold 0.92
    bubblekit track     --out run --all-from 10
    bubblekit catalog   --out run
    bubblekit serve     --out run --port 8080

``summarize`` is the only stage that reads raw particles; everything
after it works from the stored summary fields.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import synth
from .catalog import build_catalog
from .pipeline import (
    DEFAULT_GRID_DIMS,
    RunPaths,
    SummaryConfig,
    extract_run,
    load_meta,
    open_store,
    summarize_run,
)
from .similarity import BoxFilter
from .tracking import save_track, track, track_all


def _dims(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected AxBxC, got {text!r}")
    return tuple(int(p) for p in parts)


def _box(text: str) -> BoxFilter:
    try:
        spans = [tuple(int(v) for v in part.split(":")) for part in text.split(",")]
        return BoxFilter(lo=tuple(s[0] for s in spans), hi=tuple(s[1] for s in spans))
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(
            f"expected x0:x1,y0:y1,z0:z1 voxel ranges, got {text!r}"
        )


def _add_out(p: argparse.ArgumentParser):
    p.add_argument("--out", required=True, metavar="DIR", help="run directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bubblekit", description="bubble dynamics pipeline for particle bed data"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic scene and its particle files")
    _add_out(g)
    g.add_argument("--preset", choices=sorted(synth.SCENE_PRESETS), default="default")
    g.add_argument("--n-particles", type=int, default=None)
    g.add_argument("--steps", type=int, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--chunks", type=int, default=4, help="particle files per step")

    s = sub.add_parser("summarize", help="particles -> similarity + velocity fields")
    _add_out(s)
    s.add_argument("--grid", type=_dims, default=DEFAULT_GRID_DIMS, metavar="NXxNYxNZ")
    s.add_argument("--gamma", type=float, default=0.3)
    s.add_argument("--cluster", type=_dims, default=(3, 3, 3), metavar="AxBxC")
    s.add_argument("--threshold", type=float, default=0.92)
    s.add_argument("--every", type=int, default=1, metavar="N", help="process every Nth step")
    s.add_argument("--dt", type=float, default=None, help="simulation seconds per step")
    s.add_argument("--template-box", type=_box, default=None, metavar="X0:X1,Y0:Y1,Z0:Z1")
    s.add_argument("--keep-density", action="store_true", help="also store density fields")
    s.add_argument("--min-voxels", type=int, default=2)

    e = sub.add_parser("extract", help="similarity fields -> per-step bubble records")
    _add_out(e)
    e.add_argument("--threshold", type=float, default=None)
    e.add_argument("--min-voxels", type=int, default=None)

    t = sub.add_parser("track", help="follow bubbles across time steps")
    _add_out(t)
    seed = t.add_mutually_exclusive_group(required=True)
    seed.add_argument("--seed-bubble", nargs=2, type=int, metavar=("T", "ID"))
    seed.add_argument("--all-from", type=int, metavar="T", help="track every bubble at step T")

    c = sub.add_parser("catalog", help="build catalog.csv and per-bubble images")
    _add_out(c)
    c.add_argument("--size-px", type=int, default=256)

    v = sub.add_parser("serve", help="HTTP API over a built catalog")
    _add_out(v)
    v.add_argument("--port", type=int, default=8080)
    v.add_argument("--frontend", default=None, metavar="DIR", help="static explorer app dir")

    return parser


def cmd_generate(args) -> int:
    factory = synth.SCENE_PRESETS[args.preset]
    kwargs = {}
    if args.n_particles is not None:
        kwargs["n_particles"] = args.n_particles
    if args.steps is not None:
        kwargs["n_timesteps"] = args.steps
    if args.seed is not None:
        kwargs["seed"] = args.seed
    scene = factory(**kwargs)
    paths = RunPaths(args.out)
    paths.root.mkdir(parents=True, exist_ok=True)
    synth.save_scene(scene, paths.scene)
    for t in range(scene.n_timesteps):
        chunks = synth.generate(scene, t, chunks=args.chunks)
        synth.write_particles(chunks, paths.particles)
    print(
        f"wrote scene.json and {scene.n_timesteps} steps x {args.chunks} chunks "
        f"({scene.n_particles} particles/step) to {paths.root}"
    )
    return 0


def cmd_summarize(args) -> int:
    config = SummaryConfig(
        grid_dims=args.grid,
        gamma=args.gamma,
        cluster_size=args.cluster,
        threshold=args.threshold,
        every=args.every,
        dt=args.dt,
        template_box=args.template_box,
        keep_density=args.keep_density,
        min_voxels=args.min_voxels,
    )
    meta = summarize_run(args.out, config)
    times = meta["time_steps"]
    print(
        f"summarized {len(times)} steps ({times[0]}..{times[-1]}, every {meta['every']}) "
        f"on a {'x'.join(map(str, meta['grid']['dims']))} grid"
    )
    return 0


def cmd_extract(args) -> int:
    n = extract_run(args.out, threshold=args.threshold, min_voxels=args.min_voxels)
    print(f"extracted {n} bubble records into {RunPaths(args.out).bubbles}")
    return 0


def cmd_track(args) -> int:
    store = open_store(args.out)
    tracks_dir = RunPaths(args.out).tracks
    if args.seed_bubble is not None:
        record = track(tuple(args.seed_bubble), store)
        path = save_track(record, tracks_dir)
        print(f"track {record.track_id}: {len(record.steps)} steps, "
              f"{len(record.events)} events -> {path}")
    else:
        records = track_all(args.all_from, store)
        for record in records:
            save_track(record, tracks_dir)
        print(f"tracked {len(records)} bubbles from step {args.all_from} -> {tracks_dir}")
    return 0


def cmd_catalog(args) -> int:
    rows = build_catalog(args.out, size_px=args.size_px)
    print(f"catalog.csv with {len(rows)} rows and {len(rows)} images in {args.out}")
    return 0


def cmd_serve(args) -> int:
    from .server import serve

    load_meta(args.out)  # fail early with a readable message
    httpd = serve(args.out, args.port, frontend_dir=args.frontend)
    print(f"serving {args.out} on http://127.0.0.1:{args.port} (Ctrl-C to stop)")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "summarize": cmd_summarize,
    "extract": cmd_extract,
    "track": cmd_track,
    "catalog": cmd_catalog,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (FileNotFoundError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
