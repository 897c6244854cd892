import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from conftest import square_room, two_rooms
from semexplore.derived import (
    SemanticMap,
    build_semantic_map,
    export_palette_csv,
    export_semantic_ppm,
    export_skeleton_pgm,
    extract_walls,
    preprocess_binary,
    region_of,
    segment_regions,
    thin_skeleton,
)
from semexplore.errors import OutOfExtentError
from semexplore.grid import GridGeometry
from semexplore.mapping import BLACK, GREY, WHITE, ImageMap, grid_to_image, rasterize_world

EIGHT = np.ones((3, 3), bool)


def _img(pixels, res=0.1):
    px = np.asarray(pixels, dtype=np.uint8)
    return ImageMap(px, GridGeometry(px.shape[1], px.shape[0], res, (res / 2, res / 2)))


def _blank(h, w, value=BLACK):
    return np.full((h, w), value, dtype=np.uint8)


def test_opening_keeps_solid_white():
    assert preprocess_binary(_img(_blank(12, 12, WHITE))).all()


def test_opening_drops_isolated_pixel():
    px = _blank(9, 9)
    px[4, 4] = WHITE
    assert not preprocess_binary(_img(px)).any()


def test_opening_drops_spur():
    px = _blank(12, 12)
    px[3:8, 3:8] = WHITE
    px[5, 8:11] = WHITE
    out = preprocess_binary(_img(px))
    assert out[3:8, 3:8].all()
    assert not out[5, 8:11].any()


def test_thin_line_unchanged():
    m = np.zeros((7, 15), bool)
    m[3, 2:13] = True
    assert np.array_equal(thin_skeleton(m).skeleton, m)


def test_thin_block_to_centre():
    m = np.zeros((5, 5), bool)
    m[1:4, 1:4] = True
    sk = thin_skeleton(m).skeleton
    assert sk.sum() == 1 and sk[2, 2]


def test_thin_corridor_spans_long_axis():
    m = np.zeros((8, 26), bool)
    m[2:6, 3:23] = True
    sk = thin_skeleton(m).skeleton
    _, n = ndimage.label(sk, structure=EIGHT)
    assert n == 1
    cols = np.flatnonzero(sk.any(axis=0))
    assert cols.min() <= 3 + 2 and cols.max() >= 22 - 2
    assert sk.sum(axis=0).max() == 1


def _check_skeleton(mask, sk):
    assert not (sk & ~mask).any()
    blocks = sk[:-1, :-1] & sk[1:, :-1] & sk[:-1, 1:] & sk[1:, 1:]
    assert not blocks.any()
    comp, n = ndimage.label(mask, structure=EIGHT)
    with_skel = len(np.unique(comp[sk]))
    _, m = ndimage.label(sk, structure=EIGHT)
    assert m == with_skel
    assert np.array_equal(thin_skeleton(sk).skeleton, sk)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_thinning_invariants_on_random_blobs(seed):
    rng = np.random.default_rng(seed)
    noise = rng.random((40, 40)) < 0.45
    mask = ndimage.binary_opening(ndimage.binary_closing(noise, iterations=2), structure=EIGHT)
    _check_skeleton(mask, thin_skeleton(mask).skeleton)


def test_skeleton_on_mapped_rooms():
    img = grid_to_image(rasterize_world(two_rooms()))
    mask = preprocess_binary(img)
    _check_skeleton(mask, thin_skeleton(mask).skeleton)


def test_one_horizontal_wall():
    px = _blank(10, 50, WHITE)
    px[5, 10:40] = BLACK
    walls = extract_walls(_img(px))
    assert len(walls.segments) == 1
    s = walls.segments[0]
    assert s.orientation == "horizontal" and s.length == 30


def test_no_walls_in_empty_image():
    assert extract_walls(_img(_blank(20, 20, GREY))).segments == []


def test_wall_runs_cover_mapped_walls():
    img = grid_to_image(rasterize_world(two_rooms()))
    walls = extract_walls(img)
    black = img.pixels == BLACK
    covered = walls.coverage(black.shape) & black
    assert covered.sum() >= 0.9 * black.sum()


def _two_box_rooms():
    # two 10x10 rooms separated by a wall column with a 3 px door
    px = _blank(12, 23)
    px[1:11, 1:11] = WHITE
    px[1:11, 12:22] = WHITE
    px[5:8, 11] = WHITE
    return _img(px, res=0.1)


def test_door_closure_splits_two_rooms():
    from semexplore.derived import SegmentationParams

    params = SegmentationParams(door_gap_max=0.3, min_region_area=0.05, min_wall_len=0.3)
    img = _two_box_rooms()
    sem = build_semantic_map(img, params=params)
    assert len(sem.regions) == 2
    assert sem.labels[3, 3] != sem.labels[3, 18]


def test_open_room_is_one_region():
    img = grid_to_image(rasterize_world(square_room()))
    sem = build_semantic_map(img)
    assert len(sem.regions) == 1
    assert (sem.labels > 0).sum() == (img.pixels == WHITE).sum()


def test_mapped_two_rooms():
    world = two_rooms()
    grid = rasterize_world(world)
    sem = build_semantic_map(grid_to_image(grid))
    assert len(sem.regions) == 2
    a = region_of(sem, grid, (2.5, 2.5))
    b = region_of(sem, grid, (7.5, 2.5))
    assert a is not None and b is not None and a != b
    assert region_of(sem, grid, (1.0, 4.0)) == a


def test_region_ids_survive_growth():
    world = two_rooms()
    full = grid_to_image(rasterize_world(world))
    partial = full.pixels.copy()
    partial[:, 80:] = GREY  # right room half unknown
    first = build_semantic_map(ImageMap(partial, full.geometry))
    left_id = int(first.labels[25, 25])
    second = build_semantic_map(full, prev=first)
    assert int(second.labels[25, 25]) == left_id
    right = int(second.labels[25, 75])
    assert right == int(first.labels[25, 75])
    assert (second.labels == right).sum() > (first.labels == right).sum()


def test_new_region_gets_fresh_id():
    world = two_rooms()
    full = grid_to_image(rasterize_world(world))
    partial = full.pixels.copy()
    partial[:, 52:] = GREY
    first = build_semantic_map(ImageMap(partial, full.geometry))
    second = build_semantic_map(full, prev=first)
    assert set(first.regions) < set(second.regions)


def test_labels_are_white_and_connected():
    img = grid_to_image(rasterize_world(two_rooms()))
    sem = build_semantic_map(img)
    assert np.all(img.pixels[sem.labels > 0] == WHITE)
    for rid in sem.regions:
        _, n = ndimage.label(sem.labels == rid)
        assert n == 1


def test_region_of_unknown_and_outside():
    world = two_rooms()
    grid = rasterize_world(world)
    grid.state[:, 60:] = 0
    sem = build_semantic_map(grid_to_image(grid))
    assert region_of(sem, grid, (8.0, 2.5)) is None
    with pytest.raises(OutOfExtentError):
        region_of(sem, grid, (50.0, 50.0))


def test_region_of_centroid():
    world = two_rooms()
    grid = rasterize_world(world)
    sem = build_semantic_map(grid_to_image(grid))
    for rid, reg in sem.regions.items():
        assert region_of(sem, grid, reg.centroid) == rid


def test_segmentation_deterministic(tmp_path):
    img = grid_to_image(rasterize_world(two_rooms()))
    a, b = build_semantic_map(img), build_semantic_map(img)
    assert np.array_equal(a.labels, b.labels) and a.regions == b.regions
    export_semantic_ppm(a, tmp_path / "a.ppm", img)
    export_semantic_ppm(b, tmp_path / "b.ppm", img)
    assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()


def test_exports(tmp_path):
    img = grid_to_image(rasterize_world(two_rooms()))
    sem = build_semantic_map(img)
    sk = thin_skeleton(preprocess_binary(img))
    export_skeleton_pgm(sk, tmp_path / "s.pgm")
    data = (tmp_path / "s.pgm").read_bytes()
    header = f"P5\n{sk.width} {sk.height}\n255\n".encode()
    assert data.startswith(header)
    assert set(data[len(header):]) <= {0, 255}
    assert data[len(header):].count(0) == int(sk.skeleton.sum())
    export_palette_csv(sem, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "id,r,g,b,pixel_count" and len(lines) == 1 + len(sem.regions)
    assert sum(int(l.split(",")[4]) for l in lines[1:]) == int((sem.labels > 0).sum())


def test_empty_semantic_map():
    sem = SemanticMap.empty((4, 5))
    assert (sem.width, sem.height) == (5, 4) and not sem.regions
    out = segment_regions(_img(_blank(4, 5, GREY)), extract_walls(_img(_blank(4, 5, GREY))))
    assert not out.regions
