from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

import refimpl
from cellws import (
    BinaryVolume,
    Connectivity,
    LabelVolume,
    NoMarkersError,
    ScalarVolume,
    connected_components,
    connectivity_offsets,
    local_minima_markers,
    marker_watershed,
    reject_background_segments,
    seeded_watershed,
)


def _scalar(arr):
    return ScalarVolume.from_array(np.asarray(arr, dtype=np.float32))


def _labels(arr):
    return LabelVolume.from_array(np.asarray(arr, dtype=np.uint32))


def _quantized_landscape(rng, shape, levels=16):
    # k/levels values are exact in float32, so priority comparisons and
    # +constant shifts behave identically everywhere
    return _scalar(rng.integers(0, levels, shape).astype(np.float32) / levels)


def _random_markers(rng, shape, k):
    arr = np.zeros(shape, dtype=np.uint32)
    flat = rng.choice(arr.size, size=k, replace=False)
    arr.ravel()[flat] = np.arange(1, k + 1)
    return _labels(arr)


def test_ridge_goes_to_earlier_marker():
    land = _scalar([[[0.0, 1.0, 0.0]]])
    marks = _labels([[[1, 0, 2]]])
    out = seeded_watershed(land, marks)
    assert out.data[0, 0].tolist() == [1, 1, 2]


def test_two_basins_split_at_ridge():
    vals = np.array([0.0, 0.1, 0.2, 0.9, 0.2, 0.1, 0.0], dtype=np.float32)
    land = _scalar(vals.reshape(1, 1, 7))
    marks = np.zeros((1, 1, 7), dtype=np.uint32)
    marks[0, 0, 0] = 1
    marks[0, 0, 6] = 2
    out = seeded_watershed(land, _labels(marks))
    assert out.data[0, 0].tolist() == [1, 1, 1, 1, 2, 2, 2]


def test_marker_preservation_and_totality():
    rng = np.random.default_rng(31)
    for _ in range(25):
        side = int(rng.integers(2, 10))
        land = _quantized_landscape(rng, (side, side, side))
        k = int(rng.integers(1, 5))
        marks = _random_markers(rng, (side, side, side), k)
        out = seeded_watershed(land, marks)
        assert (out.data != 0).all()
        mv = marks.data != 0
        assert np.array_equal(out.data[mv], marks.data[mv])
        assert set(np.unique(out.data)) <= set(np.unique(marks.data))


def test_marker_labels_need_not_be_contiguous():
    land = _scalar(np.zeros((1, 1, 4), dtype=np.float32))
    marks = _labels(np.array([[[3, 0, 0, 7]]]))
    out = seeded_watershed(land, marks)
    assert set(np.unique(out.data)) == {3, 7}


def test_regions_are_connected():
    rng = np.random.default_rng(32)
    for conn in (Connectivity.FACE6, Connectivity.VERTEX26):
        for _ in range(10):
            land = _quantized_landscape(rng, (6, 6, 6))
            marks = _random_markers(rng, (6, 6, 6), 4)
            out = seeded_watershed(land, marks, conn)
            for lab in np.unique(out.data):
                region = BinaryVolume.from_array(out.data == lab)
                assert connected_components(region, conn).instance_count() == 1


def test_deterministic_across_repeats_and_threads():
    rng = np.random.default_rng(33)
    land = _quantized_landscape(rng, (12, 12, 12))
    marks = _random_markers(rng, (12, 12, 12), 6)
    base = seeded_watershed(land, marks)
    for n in (1, 2, 8):
        with ThreadPoolExecutor(max_workers=n) as pool:
            outs = list(pool.map(lambda _: seeded_watershed(land, marks), range(n)))
        for out in outs:
            assert out.identical(base)


def test_pop_trace_non_decreasing():
    rng = np.random.default_rng(34)
    for _ in range(10):
        land = _quantized_landscape(rng, (7, 7, 7))
        marks = _random_markers(rng, (7, 7, 7), 3)
        out, trace = seeded_watershed(land, marks, return_pop_trace=True)
        assert trace.size == 7 * 7 * 7
        assert (np.diff(trace) >= 0).all()
        assert (out.data != 0).all()


def test_plus_constant_invariance():
    rng = np.random.default_rng(35)
    for _ in range(10):
        land = _quantized_landscape(rng, (6, 6, 6), levels=128)
        marks = _random_markers(rng, (6, 6, 6), 4)
        shifted = _scalar(land.data + np.float32(1.5))
        assert seeded_watershed(land, marks).identical(seeded_watershed(shifted, marks))


def test_empty_markers_raise():
    land = _scalar(np.zeros((2, 2, 2), dtype=np.float32))
    marks = _labels(np.zeros((2, 2, 2), dtype=np.uint32))
    with pytest.raises(NoMarkersError):
        seeded_watershed(land, marks)


def test_dims_mismatch_raises():
    land = _scalar(np.zeros((2, 2, 2), dtype=np.float32))
    marks = _labels(np.zeros((2, 2, 3), dtype=np.uint32))
    with pytest.raises(ValueError):
        seeded_watershed(land, marks)


# ---------------------------------------------------------------------------
# regional minima


def test_two_bowls_two_markers():
    vals = np.full((3, 3, 7), 1.0, dtype=np.float32)
    vals[1, 1, 1] = 0.2
    vals[1, 1, 5] = 0.3
    marks = local_minima_markers(_scalar(vals))
    assert marks.instance_count() == 2
    assert marks.data[1, 1, 1] != 0
    assert marks.data[1, 1, 5] != 0
    assert marks.data[1, 1, 1] != marks.data[1, 1, 5]


def test_constant_volume_single_marker():
    marks = local_minima_markers(_scalar(np.full((3, 4, 5), 0.7, dtype=np.float32)))
    assert marks.instance_count() == 1
    assert (marks.data == 1).all()


def test_plateau_minimum_single_marker():
    vals = np.full((1, 1, 7), 1.0, dtype=np.float32)
    vals[0, 0, 2:5] = 0.25
    marks = local_minima_markers(_scalar(vals))
    assert marks.instance_count() == 1
    assert (marks.data[0, 0, 2:5] == 1).all()
    assert marks.data[0, 0, 0] == 0


def test_minima_match_brute_force():
    rng = np.random.default_rng(36)
    for conn in (Connectivity.FACE6, Connectivity.VERTEX26):
        offs = connectivity_offsets(conn)
        for _ in range(25):
            side = int(rng.integers(1, 7))
            vals = rng.integers(0, 4, (side, side, side)).astype(np.float32) / 4.0
            got = local_minima_markers(_scalar(vals), conn)
            want = refimpl.brute_force_minima(vals, offs)
            assert np.array_equal(got.data, want)


def test_minima_numbering_ascending_flat_order():
    vals = np.full((1, 1, 9), 1.0, dtype=np.float32)
    vals[0, 0, 7] = 0.1
    vals[0, 0, 1] = 0.2
    marks = local_minima_markers(_scalar(vals))
    assert marks.data[0, 0, 1] == 1
    assert marks.data[0, 0, 7] == 2


# ---------------------------------------------------------------------------
# marker watershed


def test_marker_watershed_uniform_low():
    out = marker_watershed(_scalar(np.full((3, 3, 3), 0.2, dtype=np.float32)), 0.5)
    assert (out.data == 1).all()


def test_marker_watershed_threshold_is_strict():
    with pytest.raises(NoMarkersError):
        marker_watershed(_scalar(np.full((2, 2, 2), 0.5, dtype=np.float32)), 0.5)


def test_marker_watershed_two_basins_match_manual():
    vals = np.full((9, 9, 9), 0.1, dtype=np.float32)
    vals[:, :, 4] = 0.9  # membrane sheet
    prob = _scalar(vals)
    got = marker_watershed(prob, 0.5)
    below = BinaryVolume.from_array(vals < 0.5)
    manual = seeded_watershed(prob, connected_components(below, Connectivity.FACE6))
    assert got.identical(manual)
    assert got.instance_count() == 2
    assert (got.data[:, :, :4] == got.data[0, 0, 0]).all()
    assert (got.data[:, :, 5:] == got.data[0, 0, 8]).all()


# ---------------------------------------------------------------------------
# background rejection


def test_reject_exceeds_is_strict():
    arr = np.zeros((1, 2, 10), dtype=np.uint32)
    arr[0, 0, :] = 1   # 10 voxels, 6 in background
    arr[0, 1, :] = 2   # 10 voxels, 5 in background
    bg = np.zeros((1, 2, 10), dtype=bool)
    bg[0, 0, :6] = True
    bg[0, 1, :5] = True
    out = reject_background_segments(_labels(arr), BinaryVolume.from_array(bg), 0.5)
    assert (out.data[0, 0] == 0).all()
    assert (out.data[0, 1] == 2).all()


def test_reject_fully_inside_background():
    arr = np.ones((2, 2, 2), dtype=np.uint32)
    bg = np.ones((2, 2, 2), dtype=bool)
    out = reject_background_segments(_labels(arr), BinaryVolume.from_array(bg), 0.5)
    assert (out.data == 0).all()


def test_reject_empty_background_is_identity():
    rng = np.random.default_rng(37)
    arr = rng.integers(0, 4, (4, 4, 4)).astype(np.uint32)
    labs = _labels(arr)
    bg = BinaryVolume.from_array(np.zeros((4, 4, 4), dtype=bool))
    assert reject_background_segments(labs, bg, 0.5).identical(labs)


def test_reject_survivors_keep_ids():
    arr = np.zeros((1, 1, 6), dtype=np.uint32)
    arr[0, 0, :3] = 4
    arr[0, 0, 3:] = 9
    bg = np.zeros((1, 1, 6), dtype=bool)
    bg[0, 0, :3] = True  # label 4 fully in background
    out = reject_background_segments(_labels(arr), BinaryVolume.from_array(bg), 0.5)
    assert (out.data[0, 0, :3] == 0).all()
    assert (out.data[0, 0, 3:] == 9).all()
