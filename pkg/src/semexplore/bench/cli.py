"""``explore`` command line: single runs, benchmarks, world generation and map post-processing."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from ..derived import (
    build_semantic_map,
    export_palette_csv,
    export_semantic_ppm,
    export_skeleton_pgm,
    preprocess_binary,
    thin_skeleton,
)
from ..errors import ExploreError, StallError
from ..explore.loop import Limits
from ..explore.strategy import MODES, StrategyConfig
from ..grid import GridGeometry
from ..mapping import OccupancyGrid, export_pgm, grid_to_image, image_to_states, read_pgm
from ..world import load_world, save_world
from .trial import run_benchmark, run_trial, summary_line
from .worldgen import SIZE_CLASSES, generate_world

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_THRESHOLD = 2
EXIT_STALL = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="explore", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="explore one world and write every map product")
    run.add_argument("--world", required=True, help="world JSON file")
    run.add_argument("--strategy", choices=MODES, default="semantic")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--k", type=float, default=None, help="semantic sampling rate (1/s)")
    run.add_argument("--reward", type=float, default=None, help="same-region reward A")
    run.add_argument("--gain-window", type=float, default=None, help="information-gain square side (m)")
    run.add_argument("--resolution", type=float, default=0.1, help="grid resolution (m/cell)")
    run.add_argument("--target-rate", type=float, default=0.98)
    run.add_argument("--max-sim-time", type=float, default=2400.0, help="simulation time limit (s)")

    bench = sub.add_parser("bench", help="A/B benchmark over seeded generated worlds")
    bench.add_argument("--size", choices=sorted(SIZE_CLASSES), default="medium")
    bench.add_argument("--seeds", type=int, default=20)
    bench.add_argument("--out", required=True)
    bench.add_argument("--keep-maps", action="store_true", help="also write full map exports per trial")

    gen = sub.add_parser("gen-world", help="write a generated floor plan as world JSON")
    gen.add_argument("--size", choices=sorted(SIZE_CLASSES), default="medium")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    maps = sub.add_parser("maps", help="image map, skeleton and semantic map from an occupancy PGM")
    maps.add_argument("--pgm", required=True)
    maps.add_argument("--out", required=True)
    maps.add_argument("--resolution", type=float, default=None,
                      help="m/cell when no .yaml sidecar is present (default 0.1)")
    return p


def _cmd_run(args) -> int:
    world = load_world(args.world, args.resolution)
    overrides = {"k": args.k, "reward_A": args.reward, "gain_window": args.gain_window}
    cfg = StrategyConfig(mode=args.strategy, **{k: v for k, v in overrides.items() if v is not None})
    limits = Limits(target_rate=args.target_rate, max_sim_time=args.max_sim_time)
    try:
        summary = run_trial(world, args.strategy, args.seed, args.out, cfg, limits, args.resolution)
    except StallError as err:
        print(f"stall: {err}", file=sys.stderr)
        return EXIT_STALL
    print(summary_line(summary))
    return EXIT_OK


def _cmd_bench(args) -> int:
    code, report = run_benchmark(args.size, args.seeds, out_dir=args.out, keep_maps=args.keep_maps)
    sys.stdout.write(report)
    return code


def _cmd_gen(args) -> int:
    world = generate_world(args.seed, args.size)
    save_world(world, args.out)
    print(f"{world.name}: {len(world.rooms)} rooms, {len(world.walls)} walls -> {args.out}")
    return EXIT_OK


def _map_geometry(pgm: Path, shape, resolution: float | None) -> GridGeometry:
    sidecar = pgm.with_suffix(".yaml")
    res, corner = 0.1, (0.0, 0.0)
    if sidecar.exists():
        meta = yaml.safe_load(sidecar.read_text())
        res = float(meta.get("resolution", res))
        origin = meta.get("origin", [0.0, 0.0, 0.0])
        corner = (float(origin[0]), float(origin[1]))
    if resolution is not None:
        res = resolution
    h, w = shape
    return GridGeometry(w, h, res, (corner[0] + 0.5 * res, corner[1] + 0.5 * res))


def _cmd_maps(args) -> int:
    pgm = Path(args.pgm)
    pixels = read_pgm(pgm)
    geom = _map_geometry(pgm, pixels.shape, args.resolution)
    grid = OccupancyGrid(geom)
    grid.state = image_to_states(pixels)
    img = grid_to_image(grid)
    skeleton = thin_skeleton(preprocess_binary(img))
    sem = build_semantic_map(img)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_pgm(img, out / "image.pgm")
    export_skeleton_pgm(skeleton, out / "skeleton.pgm")
    export_semantic_ppm(sem, out / "semantic.ppm", img)
    export_palette_csv(sem, out / "palette.csv")
    print(f"{len(sem.regions)} regions, {int(skeleton.skeleton.sum())} skeleton pixels -> {out}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "bench": _cmd_bench, "gen-world": _cmd_gen, "maps": _cmd_maps}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ExploreError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
