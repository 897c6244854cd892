import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_rooms
from oracles import brute_gain
from semexplore.derived import build_semantic_map
from semexplore.errors import EmptyFrontierError, OutOfExtentError
from semexplore.mapping import Cell, OccupancyGrid, grid_to_image, rasterize_world
from semexplore.explore.strategy import (
    ExplorationState,
    FrontierPoint,
    GainField,
    RrtTree,
    StrategyConfig,
    detect_frontiers,
    evaluate,
    frontier_mask,
    grow_tree_step,
    info_gain,
    path_cost,
    sample_point,
    sampling_probabilities,
    score_frontier,
    select_nbv,
    semantic_frontier_point,
)
from semexplore.world import Pose


def _grid(states, res=0.1):
    return OccupancyGrid.from_states(states, res, (res / 2, res / 2))


def _state(root=(1.0, 1.0), seed=0, step=0.5):
    return ExplorationState(Pose(*root, 0.0), RrtTree(root, step), np.random.default_rng(seed))


def test_config_baseline_forces_zero():
    cfg = StrategyConfig(mode="baseline_rrt", k=0.7, reward_A=9.0)
    assert cfg.k == 0.0 and cfg.reward_A == 0.0


@pytest.mark.parametrize("kwargs", [{"k": -1}, {"reward_A": -0.1}, {"gain_window": 0}, {"mode": "greedy"}])
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        StrategyConfig(**kwargs)


def test_probability_examples():
    assert sampling_probabilities(0.1, 10) == pytest.approx((0.5, 0.5))
    assert sampling_probabilities(0.7, 0.0) == (1.0, 0.0)
    assert sampling_probabilities(0.0, 1e6)[1] == 0.0
    assert sampling_probabilities(0.2, 20)[1] == pytest.approx(0.8)


@given(st.floats(0, 100), st.floats(0, 1e4), st.floats(0, 1e4))
def test_probabilities_normalised_and_monotone(k, t1, t2):
    pr, ps = sampling_probabilities(k, t1)
    assert pr + ps == pytest.approx(1.0, abs=1e-15)
    lo, hi = sorted((t1, t2))
    assert sampling_probabilities(k, lo)[1] <= sampling_probabilities(k, hi)[1]


def test_sample_without_semantic_point_is_uniform():
    state = _state()
    state.now, state.region_entry_time = 100.0, 0.0
    cfg = StrategyConfig(k=10.0)
    pts = [sample_point(state, cfg, (0, 0, 4, 2), None) for _ in range(500)]
    xs, ys = np.array(pts).T
    assert xs.min() >= 0 and xs.max() <= 4 and ys.min() >= 0 and ys.max() <= 2
    assert 1.7 < xs.mean() < 2.3


def test_sample_at_zero_time_never_semantic():
    state = _state()
    cfg = StrategyConfig(k=5.0)
    p_s = (3.0, 3.0)
    assert all(sample_point(state, cfg, (0, 0, 10, 10), p_s) is not p_s for _ in range(1000))


def test_sample_frequency():
    state = _state(seed=11)
    state.now = 20.0
    cfg = StrategyConfig(k=0.2)
    p_s = (3.0, 3.0)
    n = 20_000
    hits = sum(sample_point(state, cfg, (0, 0, 10, 10), p_s) is p_s for _ in range(n))
    assert abs(hits / n - 0.8) < 0.01


def test_region_clock_resets_on_change_only():
    state = _state()
    state.now = 3.0
    state.update_region(1)
    state.now = 8.0
    state.update_region(1)
    state.update_region(None)
    assert state.t_in_region == 5.0
    state.update_region(2)
    assert state.t_in_region == 0.0 and state.region_id == 2


def test_extend_in_open_space():
    grid = _grid(np.full((40, 40), Cell.FREE))
    state = _state((1.0, 1.0))
    ev = grow_tree_step(state, grid, (3.0, 1.0 + 2 * math.sqrt(3)), StrategyConfig())
    assert ev.kind == "node"
    assert ev.point == pytest.approx((1.25, 1.0 + 0.25 * math.sqrt(3)))
    assert len(state.tree) == 2 and state.tree.parent[1] == 0


def test_extend_into_unknown_emits_frontier():
    st_ = np.full((40, 40), Cell.FREE)
    st_[:, 12:] = Cell.UNKNOWN
    grid = _grid(st_)
    state = _state((1.05, 1.05))
    ev = grow_tree_step(state, grid, (3.0, 1.05), StrategyConfig())
    assert ev.kind == "frontier"
    assert ev.point == pytest.approx((1.15, 1.05))
    assert len(state.tree) == 1


def test_extend_into_wall_is_blocked():
    st_ = np.full((40, 40), Cell.FREE)
    st_[:, 12] = Cell.OCCUPIED
    grid = _grid(st_)
    state = _state((1.0, 1.0))
    ev = grow_tree_step(state, grid, (3.0, 1.0), StrategyConfig())
    assert ev.kind == "blocked" and len(state.tree) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000))
def test_tree_edges_short_and_free(seed):
    rng = np.random.default_rng(seed)
    st_ = np.where(rng.random((40, 40)) < 0.05, Cell.OCCUPIED, Cell.FREE)
    st_[10, 10] = Cell.FREE
    grid = _grid(st_)
    state = _state((1.05, 1.05), seed)
    cfg = StrategyConfig()
    for _ in range(200):
        grow_tree_step(state, grid, tuple(rng.uniform(0, 4, 2)), cfg)
    from semexplore.explore.strategy import segment_cells

    nodes = state.tree.nodes
    for parent, child in state.tree.edges():
        assert np.linalg.norm(nodes[child] - nodes[parent]) <= cfg.step + 1e-9
        for ix, iy in segment_cells(grid.geometry, nodes[parent], nodes[child]):
            assert grid.state[iy, ix] == Cell.FREE


def _half_known(free_cols=20):
    st_ = np.full((40, 40), Cell.UNKNOWN)
    st_[:, :free_cols] = Cell.FREE
    return _grid(st_)


def test_frontier_merge_and_staleness():
    grid = _half_known()
    state = _state()
    cfg = StrategyConfig()
    out = detect_frontiers(state, grid, None, cfg, [(1.95, 1.05), (1.95, 1.25)])
    assert len(out) == 1
    grid.state[:, :] = Cell.FREE
    assert detect_frontiers(state, grid, None, cfg) == []


def test_fully_explored_has_no_frontiers():
    grid = _grid(np.full((20, 20), Cell.FREE))
    state = _state()
    assert detect_frontiers(state, grid, None, StrategyConfig(), [(1.0, 1.0), (0.5, 0.5)]) == []
    assert not frontier_mask(grid).any()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_detected_frontiers_valid(seed):
    rng = np.random.default_rng(seed)
    grid = _grid(rng.integers(0, 3, size=(30, 30)))
    state = _state()
    events = [tuple(p) for p in rng.uniform(0, 3, size=(40, 2))]
    for f in detect_frontiers(state, grid, None, StrategyConfig(), events):
        ix, iy = grid.geometry.world_to_cell(*f.position)
        assert grid.state[iy, ix] == Cell.FREE
        win = grid.state[max(iy - 1, 0):iy + 2, max(ix - 1, 0):ix + 2]
        assert (win == Cell.UNKNOWN).any()


def test_gain_bounds_and_example():
    cfg = StrategyConfig(gain_window=3.0)
    unk = _grid(np.full((60, 60), Cell.UNKNOWN))
    assert info_gain(unk, (3.0, 3.0), cfg) == pytest.approx(9.0)
    known = _grid(np.full((60, 60), Cell.FREE))
    assert info_gain(known, (3.0, 3.0), cfg) == pytest.approx(-9.0)
    # window cells are columns 15..44; make 20 of its 30 columns unknown
    st_ = np.full((60, 60), Cell.FREE)
    st_[:, 25:45] = Cell.UNKNOWN
    assert info_gain(_grid(st_), (3.0, 3.0), cfg) == pytest.approx(3.0)


def test_gain_out_of_extent():
    with pytest.raises(OutOfExtentError):
        info_gain(_grid(np.zeros((10, 10))), (5.0, 5.0), StrategyConfig())


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 3.99), st.floats(0.0, 2.99), st.sampled_from([1.0, 2.0, 3.0, 1.7]))
def test_gain_matches_brute_force(seed, x, y, side):
    grid = _grid(np.random.default_rng(seed).integers(0, 3, size=(30, 40)))
    cfg = StrategyConfig(gain_window=side)
    assert info_gain(grid, (x, y), cfg) == brute_gain(grid, (x, y), side)


def test_path_cost():
    assert path_cost(Pose(0, 0, 0), (3, 4)) == 5.0
    assert path_cost(Pose(2, 2, 0), (2, 2)) == 0.0


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-100, 100), st.floats(-100, 100),
       st.floats(-50, 50), st.floats(-50, 50))
def test_path_cost_translation(x0, y0, x1, y1, dx, dy):
    a = path_cost(Pose(x0, y0, 0), (x1, y1))
    b = path_cost(Pose(x0 + dx, y0 + dy, 0), (x1 + dx, y1 + dy))
    assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


def test_score_examples():
    cfg = StrategyConfig(reward_A=2.0)
    assert evaluate(10, 4, True, cfg) == 28
    assert evaluate(10, 4, False, cfg) == 24
    zero = StrategyConfig(reward_A=0.0)
    assert evaluate(10, 4, True, zero) == evaluate(10, 4, False, zero) == 26


def test_select_argmax_and_ties():
    grid = _half_known()
    cfg = StrategyConfig(reward_A=0.0)
    pose = Pose(0.55, 0.55, 0)
    fs = [FrontierPoint((1.95, 0.55)), FrontierPoint((1.95, 2.05)), FrontierPoint((1.95, 3.35))]
    best = select_nbv(fs, pose, None, grid, cfg)
    assert best.score == max(f.score for f in fs)
    # mirror pair about the robot's row: identical gain, cost 2.0 vs 3.0
    tie_grid = _grid(np.full((60, 60), Cell.UNKNOWN))
    a, b = FrontierPoint((3.0, 3.0)), FrontierPoint((3.0, 3.0))
    near = select_nbv([b, a], Pose(3.0, 1.0, 0), None, tie_grid, cfg)
    assert near.cost == pytest.approx(2.0)
    c, d = FrontierPoint((3.0, 3.0)), FrontierPoint((3.0, 4.0))
    assert select_nbv([d, c], Pose(3.0, 1.0, 0), None, tie_grid, cfg) is c


def test_empty_selection_raises():
    with pytest.raises(EmptyFrontierError):
        select_nbv([], Pose(0, 0, 0), None, _half_known(), StrategyConfig())


def _partly_mapped_two_rooms():
    world = two_rooms()
    grid = rasterize_world(world)
    geom = grid.geometry
    ix, _ = geom.world_to_cell(8.5, 0)
    grid.state[:, ix:] = Cell.UNKNOWN
    iy = geom.world_to_cell(0, 4.0)[1]
    left = geom.world_to_cell(4.0, 0)[0]
    grid.state[iy:, 2:left] = Cell.UNKNOWN
    return world, grid, build_semantic_map(grid_to_image(grid))


def test_semantic_point_nearest_in_region():
    world, grid, sem = _partly_mapped_two_rooms()
    pose = Pose(2.5, 2.5, 0)
    p = semantic_frontier_point(grid, sem, pose)
    assert p is not None
    rid = sem.labels[grid.geometry.world_to_cell(*pose.xy)[::-1]]
    fm = frontier_mask(grid) & (sem.labels == rid)
    rows, cols = np.nonzero(fm)
    xs, ys = grid.geometry.cell_to_world(cols, rows)
    assert math.dist(p, pose.xy) == pytest.approx(np.hypot(xs - 2.5, ys - 2.5).min())
    assert p[1] > 3.5  # the unknown strip in the left room, not the far right room


def test_semantic_point_none_when_room_mapped():
    grid = rasterize_world(two_rooms())
    sem = build_semantic_map(grid_to_image(grid))
    assert semantic_frontier_point(grid, sem, Pose(2.5, 2.5, 0)) is None
    assert semantic_frontier_point(grid, None, Pose(2.5, 2.5, 0)) is None


def test_same_region_flag_and_reward_inequality():
    world, grid, sem = _partly_mapped_two_rooms()
    pose = Pose(2.5, 2.5, 0)
    cfg = StrategyConfig(reward_A=5.0)
    inside = FrontierPoint(semantic_frontier_point(grid, sem, pose))
    outside = FrontierPoint((8.35, 2.5))
    field = GainField(grid)
    score_frontier(inside, pose, sem, grid, cfg, field)
    score_frontier(outside, pose, sem, grid, cfg, field)
    assert inside.flag and not outside.flag
    flat = StrategyConfig(reward_A=0.0)
    s_in = evaluate(inside.gain, inside.cost, True, flat)
    s_out = evaluate(outside.gain, outside.cost, False, flat)
    assert inside.score - outside.score == pytest.approx(s_in - s_out + 2 * cfg.reward_A)
    best = select_nbv([inside, outside], pose, sem, grid, cfg)
    assert (best is inside) == (s_out - s_in < 2 * cfg.reward_A)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50))
def test_argmax_shift_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    g, c = rng.uniform(-9, 9, 12), rng.uniform(0, 20, 12)
    flags = rng.random(12) < 0.5
    cfg = StrategyConfig(reward_A=float(rng.uniform(0, 10)))
    s = np.array([evaluate(a, b, f, cfg) for a, b, f in zip(g, c, flags)])
    assert np.argmax(s) == np.argmax(s + shift)
    flat = np.array([evaluate(a, b, f, StrategyConfig(reward_A=0.0)) for a, b, f in zip(g, c, flags)])
    assert np.allclose(s - flat, np.where(flags, cfg.reward_A, -cfg.reward_A))
