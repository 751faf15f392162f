import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laughfuse._accel import HAVE_NUMBA
from laughfuse.corpus import FrameSequence, GrayImage, noise_frame, stamp_pattern
from laughfuse.vision.cascade import CascadeModel, HaarFeature, HaarRect, Stage, WeakClassifier
from laughfuse.vision.detect import (
    DetectionBox,
    DetectionParams,
    WindowBoundsError,
    _similar,
    detect_multiscale,
    detect_raw,
    eval_window,
    group_detections,
    smile_presence_series,
)
from laughfuse.vision.integral import integral_image

from oracles import brute_eval_window, brute_scan, closure_clusters, random_cascade


def accept_all(window=24):
    feat = HaarFeature((HaarRect(0, 0, window, window, 1.0),), False)
    return CascadeModel(window, window, (Stage(-1e6, (WeakClassifier(0, 0.0, 0.0, 0.0),)),), (feat,))


def test_vacuous_threshold_accepts_everything():
    img = np.random.default_rng(0).integers(0, 256, (30, 30), dtype=np.uint8)
    ii = integral_image(img)
    for x in range(7):
        assert eval_window(accept_all(), ii, x, 3).accepted


def test_window_bounds(toy_cascade):
    ii = integral_image(np.zeros((24, 24), dtype=np.uint8))
    with pytest.raises(WindowBoundsError):
        eval_window(toy_cascade, ii, 1, 0)


@pytest.mark.parametrize("seed", range(4))
def test_eval_window_matches_pixel_oracle(seed, toy_cascade, two_stage_cascade):
    rng = np.random.default_rng(seed)
    models = [toy_cascade, two_stage_cascade] + [random_cascade(rng) for _ in range(3)]
    outcomes = set()
    for trial in range(60):
        if trial % 3 == 0:
            img = stamp_pattern(noise_frame(rng, 24, 24), 0, 0, rng)
        else:
            img = rng.integers(0, 256, (24, 24), dtype=np.uint8)
        ii = integral_image(img, with_rotated=True)
        for m in models:
            got = eval_window(m, ii, 0, 0)
            assert (got.accepted, got.exit_stage) == brute_eval_window(m, img, 0, 0)
            outcomes.add(got.accepted)
    assert outcomes == {True, False}


def test_accept_all_grid_count():
    img = np.full((26, 26), 128, dtype=np.uint8)
    raw = detect_raw(accept_all(), img, DetectionParams(scale_factor=2.0, min_neighbors=0))
    assert len(raw) == 9
    assert [(b.x, b.y) for b in raw] == [(x, y) for y in range(3) for x in range(3)]
    grouped = group_detections(raw, 2)
    assert grouped == [DetectionBox(1, 1, 24, 24, 9)]


def test_blank_gray_image_has_no_detections(toy_cascade):
    img = np.full((48, 64), 128, dtype=np.uint8)
    assert detect_raw(toy_cascade, img) == []
    assert brute_scan(toy_cascade, img, scale_factor=1.25) == []


@pytest.mark.parametrize("level", [0, 128, 255])
def test_flat_frames_stay_empty_at_every_scale(toy_cascade, level):
    # equal-size rects keep the toy features zero-sum after rounding at any scale
    img = np.full((160, 200), level, dtype=np.uint8)
    assert detect_raw(toy_cascade, img, DetectionParams(min_neighbors=0)) == []


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(1.0, 2.5))
def test_decision_depends_only_on_window_contents(toy_cascade, seed, scale):
    rng = np.random.default_rng(seed)
    n = int(np.floor(24 * scale + 0.5))
    patch = stamp_pattern(noise_frame(rng, n, n), 0, 0, rng) if seed % 2 else rng.integers(0, 256, (n, n))
    results = set()
    for _ in range(3):
        canvas = rng.integers(0, 256, (n + 20, n + 20)).astype(np.uint8)
        x, y = int(rng.integers(0, 21)), int(rng.integers(0, 21))
        canvas[y : y + n, x : x + n] = patch
        results.add(eval_window(toy_cascade, integral_image(canvas), x, y, scale))
    assert len(results) == 1


@pytest.mark.parametrize("seed", range(6))
def test_stamped_pattern_single_box(seed, toy_cascade):
    rng = np.random.default_rng(seed)
    x0, y0 = int(rng.integers(2, 39)), int(rng.integers(2, 23))
    frame = stamp_pattern(noise_frame(rng), x0, y0, rng)
    boxes = detect_multiscale(toy_cascade, frame)
    assert len(boxes) == 1
    b = boxes[0]
    assert abs(b.x + b.w / 2 - (x0 + 12)) <= 2 and abs(b.y + b.h / 2 - (y0 + 12)) <= 2


@pytest.mark.parametrize("seed", range(3))
def test_multiscale_matches_brute_scan(seed, toy_cascade, two_stage_cascade):
    rng = np.random.default_rng(100 + seed)
    img = rng.integers(0, 256, (40, 44), dtype=np.uint8)
    params = DetectionParams(scale_factor=1.2, min_neighbors=1)
    for m in (toy_cascade, two_stage_cascade, random_cascade(rng)):
        raw = detect_raw(m, img, params)
        assert [(b.x, b.y, b.w, b.h) for b in raw] == sorted(
            brute_scan(m, img, scale_factor=1.2), key=lambda t: (t[2], t[1], t[0])
        )
        assert detect_multiscale(m, img, params) == group_detections(raw, 1)


def test_grouping_examples():
    same = [DetectionBox(10, 10, 24, 24)] * 3
    assert group_detections(same, 2) == [DetectionBox(10, 10, 24, 24, 3)]
    assert group_detections(same[:1], 2) == []
    far = same + [DetectionBox(110, 10, 24, 24)] * 3
    assert group_detections(far, 2) == [DetectionBox(10, 10, 24, 24, 3), DetectionBox(110, 10, 24, 24, 3)]


boxes_st = st.lists(
    st.builds(DetectionBox, st.integers(0, 60), st.integers(0, 60), st.integers(20, 34), st.integers(20, 34)),
    max_size=25,
)


@settings(max_examples=80, deadline=None)
@given(boxes_st, st.integers(0, 3), st.randoms(use_true_random=False))
def test_grouping_is_order_independent_and_matches_closure(boxes, k, rnd):
    ref = group_detections(boxes, k)
    shuffled = list(boxes)
    rnd.shuffle(shuffled)
    assert group_detections(shuffled, k) == ref
    clusters = [c for c in closure_clusters(boxes, _similar) if len(c) > k]
    assert sorted(b.neighbors for b in ref) == sorted(len(c) for c in clusters)
    for c in clusters:
        n = len(c)
        mean = DetectionBox(*(int(np.floor(sum(getattr(b, a) for b in c) / n + 0.5)) for a in "xywh"), n)
        assert mean in ref


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(-40, 40))
def test_brightness_shift_invariance(toy_cascade, two_stage_cascade, seed, c):
    # zero-sum features and the shift-free variance leave every decision unchanged
    rng = np.random.default_rng(seed)
    if seed % 2:
        frame = stamp_pattern(noise_frame(rng, 24, 24), 0, 0, rng).astype(np.int64)
    else:
        frame = rng.integers(0, 256, (24, 24))
    frame = np.clip(frame, 45, 210)
    for m in (toy_cascade, two_stage_cascade):
        assert all(sum(r.weight * r.w * r.h for r in f.rects) == 0 for f in m.features)
        a = eval_window(m, integral_image(frame.astype(np.uint8), with_rotated=True), 0, 0)
        b = eval_window(m, integral_image((frame + c).astype(np.uint8), with_rotated=True), 0, 0)
        assert a == b


def test_eval_window_is_repeatable(toy_cascade):
    rng = np.random.default_rng(3)
    img = stamp_pattern(noise_frame(rng), 10, 10, rng)
    first = [eval_window(toy_cascade, integral_image(img), x, 10) for x in range(4, 16)]
    again = [eval_window(toy_cascade, integral_image(img.copy()), x, 10) for x in range(4, 16)]
    assert first == again
    assert any(r.accepted for r in first) and not all(r.accepted for r in first)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("seed", range(3))
def test_backends_agree(seed, toy_cascade, two_stage_cascade):
    rng = np.random.default_rng(seed)
    img = stamp_pattern(noise_frame(rng), 20, 10, rng)
    for m in (toy_cascade, two_stage_cascade, random_cascade(rng)):
        a = detect_raw(m, img, backend="numba")
        b = detect_raw(m, img, backend="numpy")
        assert a == b


def test_roi_restricts_and_keeps_image_coordinates(toy_cascade):
    rng = np.random.default_rng(9)
    frame = stamp_pattern(noise_frame(rng), 30, 14, rng)
    full = detect_multiscale(toy_cascade, frame)
    inside = detect_multiscale(toy_cascade, frame, roi=(24, 8, 36, 36))
    outside = detect_multiscale(toy_cascade, frame, roi=(0, 0, 28, 40))
    assert inside == full and outside == []
    with pytest.raises(WindowBoundsError):
        detect_multiscale(toy_cascade, frame, roi=(50, 0, 30, 30))


def test_smile_presence_series(toy_cascade):
    rng = np.random.default_rng(11)
    blank = [GrayImage(np.full((48, 64), 128, dtype=np.uint8)) for _ in range(4)]
    s = smile_presence_series(toy_cascade, FrameSequence(tuple(blank), 25.0))
    assert len(s) == 4 and s.smile_ratio == 0.0 and s.mean_count == 0.0
    stamped = [GrayImage(stamp_pattern(noise_frame(rng), 18, 12, rng)) for _ in range(5)]
    s = smile_presence_series(toy_cascade, FrameSequence(tuple(stamped), 25.0))
    assert len(s) == 5 and s.smile_ratio == 1.0
    assert all(f.present == (f.count >= 1) for f in s.frames)
    dump = s.to_json()
    assert [d["idx"] for d in dump] == list(range(5))
    assert set(dump[0]["boxes"][0]) == {"x", "y", "w", "h", "neighbors"}
