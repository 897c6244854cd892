"""Trial summaries: time and length to the coverage target, and room re-entries."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely

from ..explore.loop import ExplorationResult
from ..world import WorldSpec, room_masks

FULLY_EXPLORED = 0.98
REENTRY_EXPLORED = 0.8  # a room left at least this explored counts when entered again


@dataclass(frozen=True)
class TrialSummary:
    world: str
    strategy: str
    seed: int
    time_to_98: float | None
    length_to_98: float | None
    final_rate: float
    region_reentries: int

    def __post_init__(self):
        if (self.time_to_98 is None) != (self.final_rate < FULLY_EXPLORED):
            raise ValueError("time_to_98 must be present exactly when final_rate reaches the target")


def first_reaching(timeline, threshold: float = FULLY_EXPLORED):
    """First timeline row whose exploration rate reaches ``threshold``, or ``None``."""
    for row in timeline:
        if row.exploration_rate >= threshold:
            return row
    return None


def room_sequence(world: WorldSpec, trajectory) -> list[tuple[float, int]]:
    """``(time, room index)`` at every change of room along the trajectory.

    Points on a room boundary (doorways) or outside every room keep the previous room.
    """
    if not len(trajectory):
        return []
    traj = np.asarray(trajectory, dtype=float)
    inside = np.stack([shapely.contains_xy(room.shape, traj[:, 1], traj[:, 2]) for room in world.rooms], axis=1) \
        if world.rooms else np.zeros((len(traj), 0), dtype=bool)
    seq = []
    current = None
    for i in range(len(traj)):
        hits = np.flatnonzero(inside[i])
        if hits.size == 0:
            continue
        room = int(hits[0])
        if room != current:
            seq.append((float(traj[i, 0]), room))
            current = room
    return seq


def count_reentries(world: WorldSpec, trajectory, first_known: np.ndarray, truth: np.ndarray,
                    resolution: float, threshold: float = REENTRY_EXPLORED) -> int:
    """Entries into a room that was earlier exited with at least ``threshold`` of its free cells known."""
    masks = [m & truth for m in room_masks(world, resolution)]
    totals = [int(m.sum()) for m in masks]
    seq = room_sequence(world, trajectory)
    left_explored: set[int] = set()
    count = 0
    for k, (t, room) in enumerate(seq):
        if k > 0:
            prev = seq[k - 1][1]
            if totals[prev]:
                known = int((first_known[masks[prev]] <= t).sum())
                if known / totals[prev] >= threshold:
                    left_explored.add(prev)
            if room in left_explored:
                count += 1
    return count


def compute_metrics(result: ExplorationResult, world: WorldSpec | None = None) -> TrialSummary:
    world = world or result.world
    row = first_reaching(result.timeline)
    reentries = count_reentries(world, result.trajectory, result.first_known, result.truth, result.resolution)
    final = result.final_rate
    if row is None:
        t98 = l98 = None
    else:
        t98, l98 = row.sim_time, row.trajectory_len
    return TrialSummary(world.name, result.config.mode, result.seed, t98, l98, final, reentries)


def median(values) -> float:
    vals = [v for v in values if v is not None and not math.isnan(v)]
    return float(np.median(vals)) if vals else math.nan
