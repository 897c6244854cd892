"""Single trials with full map exports, and the seeded A/B benchmark."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, replace
from pathlib import Path

from ..derived import export_palette_csv, export_semantic_ppm, export_skeleton_pgm
from ..errors import StallError
from ..explore.loop import ExplorationResult, Limits, run_exploration
from ..explore.strategy import BASELINE_RRT, SEMANTIC, StrategyConfig
from ..mapping import export_pgm, export_xyz, write_map_yaml
from ..world import WorldSpec
from .metrics import TrialSummary, compute_metrics, median
from .worldgen import generate_world

log = logging.getLogger(__name__)

SUMMARY_FIELDS = ["world", "strategy", "seed", "time_to_98", "length_to_98", "final_rate", "region_reentries"]
REDUCTION_BAR = 0.15  # median semantic time and length must be at least this much below the baseline
MIN_SUCCESS = 0.95  # fraction of trials per strategy that must reach the coverage target
MAX_MEDIAN_REENTRIES = 1.0

# published medium-house results (time s, length m), for side-by-side context only
PUBLISHED_MEDIUM = {"rrt": (593.0, 131.0), "ours": (292.0, 68.0)}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return f"{v:.6f}"
    return str(v)


def write_csv(rows, path, header=None) -> None:
    """CSV with LF line endings and 6-decimal floats; ``rows`` are dicts or sequences."""
    rows = list(rows)
    if header is None:
        if not rows or not isinstance(rows[0], dict):
            raise ValueError("header is required unless rows are dicts")
        header = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            vals = [row.get(k) for k in header] if isinstance(row, dict) else list(row)
            w.writerow([_fmt(v) for v in vals])


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def timeline_rows(result: ExplorationResult):
    for r in result.timeline:
        gx, gy = r.goal if r.goal is not None else (None, None)
        yield [float(r.sim_time), float(r.trajectory_len), int(r.explored_free_cells), float(r.exploration_rate),
               r.robot_region, None if gx is None else float(gx), None if gy is None else float(gy)]


TIMELINE_HEADER = ["sim_time", "trajectory_len", "explored_free_cells", "exploration_rate", "robot_region",
                   "goal_x", "goal_y"]


def export_result(result: ExplorationResult, out_dir) -> None:
    """Every map product and the timeline/trajectory CSVs of one run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_pgm(result.image, out / "occupancy.pgm")
    write_map_yaml(out / "occupancy.yaml", "occupancy.pgm", result.grid.geometry)
    export_pgm(result.image, out / "image.pgm")
    export_skeleton_pgm(result.skeleton, out / "skeleton.pgm")
    export_semantic_ppm(result.semantic, out / "semantic.ppm", result.image)
    export_palette_csv(result.semantic, out / "palette.csv")
    export_xyz(result.cloud, out / "cloud.xyz")
    write_csv(timeline_rows(result), out / "metrics.csv", TIMELINE_HEADER)
    write_csv(([float(t), float(x), float(y), float(th)] for t, x, y, th in result.trajectory),
              out / "trajectory.csv", ["t", "x", "y", "theta"])


def summary_line(s: TrialSummary) -> str:
    return ",".join(_fmt(v) for v in asdict(s).values())


def run_trial(world: WorldSpec, strategy: str, seed: int, out_dir, config: StrategyConfig | None = None,
              limits: Limits | None = None, resolution: float = 0.1) -> TrialSummary:
    """Run one exploration and write its outputs; a stall still writes everything before re-raising."""
    cfg = replace(config, mode=strategy) if config is not None else StrategyConfig(mode=strategy)
    try:
        result = run_exploration(world, cfg, seed, limits, resolution)
    except StallError as err:
        export_result(err.result, out_dir)
        _write_summary(compute_metrics(err.result, world), out_dir)
        raise
    export_result(result, out_dir)
    summary = compute_metrics(result, world)
    _write_summary(summary, out_dir)
    return summary


def _write_summary(summary: TrialSummary, out_dir) -> None:
    write_csv([asdict(summary)], Path(out_dir) / "summary.csv", SUMMARY_FIELDS)


def _reduction(ours: float, base: float) -> float:
    if math.isnan(ours) or math.isnan(base) or base == 0:
        return math.nan
    return 1.0 - ours / base


def _pct(v: float) -> str:
    return "n/a" if math.isnan(v) else f"{100.0 * v:.1f}%"


def _num(v: float, digits: int = 1) -> str:
    return "n/a" if math.isnan(v) else f"{v:.{digits}f}"


def aggregate(rows: list[dict], strategies) -> dict[str, dict[str, float]]:
    """Per-strategy medians/means from summary rows as written to CSV (6 decimals)."""
    def num(v):
        return float(v) if v not in ("", None) else None

    out = {}
    for strat in strategies:
        mine = [r for r in rows if r["strategy"] == strat]
        t = [num(r["time_to_98"]) for r in mine]
        length = [num(r["length_to_98"]) for r in mine]
        re = [float(r["region_reentries"]) for r in mine if r.get("error", "") == ""]
        done_t = [v for v in t if v is not None]
        done_l = [v for v in length if v is not None]
        out[strat] = {
            "trials": len(mine),
            "reached": len(done_t),
            "median_time": median(done_t),
            "mean_time": sum(done_t) / len(done_t) if done_t else math.nan,
            "median_length": median(done_l),
            "mean_length": sum(done_l) / len(done_l) if done_l else math.nan,
            "median_reentries": median(re),
            "mean_reentries": sum(re) / len(re) if re else math.nan,
        }
    return out


def thresholds_met(agg: dict, strategies) -> tuple[bool, list[str]]:
    """Check the benchmark bar; returns the verdict and one line per check."""
    checks = []
    ok = True
    for s in strategies:
        a = agg[s]
        passed = a["trials"] > 0 and a["reached"] >= math.ceil(MIN_SUCCESS * a["trials"])
        checks.append(f"{s}: {a['reached']}/{a['trials']} trials reached 98% -> {'PASS' if passed else 'FAIL'}")
        ok &= passed
    if SEMANTIC in agg and BASELINE_RRT in agg:
        sa, ba = agg[SEMANTIC], agg[BASELINE_RRT]
        for key, label in (("median_length", "length_to_98"), ("median_time", "time_to_98")):
            ratio = sa[key] / ba[key] if ba[key] and not math.isnan(sa[key]) else math.nan
            passed = not math.isnan(ratio) and ratio <= 1.0 - REDUCTION_BAR
            checks.append(f"median {label} ratio semantic/baseline = {_num(ratio, 3)} (bar <= {1 - REDUCTION_BAR:.2f})"
                          f" -> {'PASS' if passed else 'FAIL'}")
            ok &= passed
        passed = not math.isnan(sa["median_reentries"]) and sa["median_reentries"] <= ba["median_reentries"]
        checks.append(f"median region_reentries semantic {_num(sa['median_reentries'])} <= baseline "
                      f"{_num(ba['median_reentries'])} -> {'PASS' if passed else 'FAIL'}")
        ok &= passed
        passed = not math.isnan(sa["median_reentries"]) and sa["median_reentries"] <= MAX_MEDIAN_REENTRIES
        checks.append(f"median region_reentries semantic {_num(sa['median_reentries'])} <= "
                      f"{MAX_MEDIAN_REENTRIES:.0f} -> {'PASS' if passed else 'FAIL'}")
        ok &= passed
    return ok, checks


def render_report(size_class: str, n_seeds: int, agg: dict, strategies, failures: list[str]) -> str:
    lines = [f"# Exploration benchmark: {size_class}, {n_seeds} seeds", ""]
    lines.append("strategy,trials,reached_98,median_time_s,mean_time_s,median_length_m,mean_length_m,"
                 "median_reentries,mean_reentries")
    for s in strategies:
        a = agg[s]
        lines.append(",".join([s, str(a["trials"]), str(a["reached"])] + [
            _num(a[k], 6) for k in ("median_time", "mean_time", "median_length", "mean_length",
                                    "median_reentries", "mean_reentries")]))
    lines.append("")
    if SEMANTIC in agg and BASELINE_RRT in agg:
        sa, ba = agg[SEMANTIC], agg[BASELINE_RRT]
        lines.append(f"median time reduction vs baseline_rrt: {_pct(_reduction(sa['median_time'], ba['median_time']))}")
        lines.append(f"median length reduction vs baseline_rrt: "
                     f"{_pct(_reduction(sa['median_length'], ba['median_length']))}")
        lines.append("")
    (rt, rl), (ot, ol) = PUBLISHED_MEDIUM["rrt"], PUBLISHED_MEDIUM["ours"]
    lines.append(f"reference (published medium house, different simulator): RRT {rt:.0f} s / {rl:.0f} m, "
                 f"semantic {ot:.0f} s / {ol:.0f} m, reductions {_pct(_reduction(ot, rt))} time / "
                 f"{_pct(_reduction(ol, rl))} length")
    lines.append("")
    ok, checks = thresholds_met(agg, strategies)
    lines.append("thresholds:")
    lines.extend(f"  {c}" for c in checks)
    lines.append(f"verdict: {'PASS' if ok else 'FAIL'}")
    if failures:
        lines.append("")
        lines.append("failed trials:")
        lines.extend(f"  {f}" for f in failures)
    return "\n".join(lines) + "\n"


def run_benchmark(size_class: str = "medium", n_seeds: int = 20, strategies=(SEMANTIC, BASELINE_RRT),
                  out_dir="bench_out", config: StrategyConfig | None = None, limits: Limits | None = None,
                  keep_maps: bool = False) -> tuple[int, str]:
    """Run every strategy on worlds ``0..n_seeds-1``; returns ``(exit_code, report_text)``.

    Exit code 0 means the thresholds were met, 2 means they were not.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, failures = [], []
    for seed in range(n_seeds):
        world = generate_world(seed, size_class)
        for strat in strategies:
            cfg = replace(config, mode=strat) if config is not None else StrategyConfig(mode=strat)
            trial_dir = out / "trials" / f"{world.name}-{strat}"
            row = {"world": world.name, "strategy": strat, "seed": seed}
            try:
                if keep_maps:
                    summary = run_trial(world, strat, seed, trial_dir, cfg, limits)
                    result = None
                else:
                    result = run_exploration(world, cfg, seed, limits)
                    summary = compute_metrics(result, world)
                row.update(asdict(summary), error="")
                if result is not None:
                    trial_dir.mkdir(parents=True, exist_ok=True)
                    write_csv(timeline_rows(result), trial_dir / "metrics.csv", TIMELINE_HEADER)
            except StallError as err:
                summary = compute_metrics(err.result, world)
                row.update(asdict(summary), error="stall")
                failures.append(f"{world.name} {strat}: stall at rate {summary.final_rate:.3f}")
            except Exception as err:  # recorded, not fatal
                row.update(time_to_98=None, length_to_98=None, final_rate=0.0, region_reentries=0,
                           error=type(err).__name__)
                failures.append(f"{world.name} {strat}: {type(err).__name__}: {err}")
                log.exception("trial %s %s failed", world.name, strat)
            rows.append(row)
            log.info("%s %s: %s", world.name, strat, {k: row[k] for k in ("time_to_98", "length_to_98", "error")})
    header = SUMMARY_FIELDS + ["error"]
    write_csv(rows, out / "trials.csv", header)
    agg = aggregate(read_csv(out / "trials.csv"), strategies)
    report = render_report(size_class, n_seeds, agg, strategies, failures)
    with open(out / "report.txt", "w", newline="\n") as fh:
        fh.write(report)
    for s in strategies:
        write_csv([{"strategy": s, **agg[s]}], out / f"aggregate_{s}.csv")
    ok, _ = thresholds_met(agg, strategies)
    return (0 if ok else 2), report
