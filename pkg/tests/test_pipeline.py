import math

import numpy as np
import pytest

from eyecenter import imagecore as ic
from eyecenter.cascade import CascadeModel, HaarFeature, Stage, Stump
from eyecenter.hough import Circle
from eyecenter.imagecore import Rect
from eyecenter.pipeline import (HOUGH_MIN_INTENSITY, REGION_CENTER_FALLBACK, ConfigError,
                                PipelineConfig, anthropometric_box, detect_face, eye_regions,
                                face_halves, format_regions_line, localize_center,
                                min_intensity_center, parse_regions_manifest, preprocess, run,
                                szp_roi)
from eyecenter.synth import synth_frame

REJECT_ALL = CascadeModel(20, 20, (Stage((Stump(HaarFeature(((0, 0, 20, 20, -1.0), (0, 0, 10, 20, 2.0))),
                                                0.0, 0.0, 0.0),), 1.0),), "reject")


def disk_region(w=41, h=41, cx=20, cy=20, r=8, ground=200, iris=60):
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.full((h, w), ground, np.uint8)
    img[(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = iris
    return img


# ------------------------------------------------------------- regions

def test_face_halves_arithmetic():
    assert face_halves(Rect(0, 0, 100, 100), 0.6) == (Rect(0, 0, 50, 60), Rect(50, 0, 50, 60))
    assert face_halves(Rect(10, 20, 101, 50), 0.6) == (Rect(10, 20, 50, 30), Rect(60, 20, 51, 30))


def test_anthropometric_geometry():
    assert anthropometric_box(Rect(0, 0, 50, 60)) == Rect(2, 12, 45, 30)
    assert anthropometric_box(Rect(50, 0, 50, 60)) == Rect(52, 12, 45, 30)


def test_blank_frame_face_is_full_frame():
    from eyecenter.cascade import builtin_cascade
    assert detect_face(np.full((80, 90), 128, np.uint8), builtin_cascade("face")) == (Rect(0, 0, 90, 80), "full_frame")


def test_rejecting_eye_cascade_gives_anthropometric_boxes():
    frame = np.full((120, 120), 128, np.uint8)
    left, right = eye_regions(frame, Rect(0, 0, 100, 100), REJECT_ALL)
    assert (left.source, right.source) == ("anthropometric_default",) * 2
    assert (left.rect, right.rect) == (Rect(2, 12, 45, 30), Rect(52, 12, 45, 30))
    assert left.side == "left" and left.rect.center[0] < right.rect.center[0]


# ---------------------------------------------------------- preprocess

def test_preprocess_no_crop_when_te_zero():
    region = disk_region()
    pre = preprocess(region, PipelineConfig(t_e=0.0))
    assert pre.crop_offset == 0 and pre.binary.shape == region.shape


def test_preprocess_crop_rows():
    pre = preprocess(disk_region(h=33), PipelineConfig())
    assert pre.crop_offset == 10 and pre.binary.shape == (23, 41)
    assert pre.equalized.shape == pre.binary.shape


def test_preprocess_degenerate_region_is_not_cropped():
    pre = preprocess(np.full((5, 8), 100, np.uint8), PipelineConfig())
    assert pre.degenerate and pre.crop_offset == 0 and pre.binary.shape == (5, 8)


@pytest.mark.parametrize("t_b", [0, 77, 200, 254])
def test_uniform_bright_region_is_all_bright(t_b):
    pre = preprocess(np.full((30, 30), 255, np.uint8), PipelineConfig(t_b=t_b))
    assert pre.binary.min() == 1


def test_speck_inside_disk_removed():
    region = disk_region(w=60, h=60, cx=30, cy=30, r=10)
    region[30, 31] = 230
    pre = preprocess(region, PipelineConfig(t_e=0.0))
    assert pre.binary[30, 31] == 0
    assert pre.binary[30, 30] == 0 and pre.binary[2, 2] == 1


# ------------------------------------------------------------ localise

def test_localize_empty_mask_falls_back_to_center():
    b = np.ones((21, 30), np.uint8)
    pt, method, circle = localize_center(b, np.full((21, 30), 9, np.uint8))
    assert (pt, method, circle) == ((15, 10), REGION_CENTER_FALLBACK, None)


def test_localize_single_darkest_pixel():
    eq = disk_region()
    eq[20, 20] = 5
    pt, method, circle = localize_center((eq > 100).astype(np.uint8), eq)
    assert method == HOUGH_MIN_INTENSITY
    assert (circle.cx, circle.cy) == (20, 20) and abs(circle.r - 8) <= 1
    assert pt == (20, 20)


def test_min_intensity_two_by_two_block():
    eq = np.full((21, 21), 100, np.uint8)
    eq[12:14, 11:13] = 0  # x 11..12, y 12..13
    # centroid (11.5, 12.5) rounds half up to (12, 13), inside r = 6
    assert min_intensity_center(eq, Circle(10, 10, 6)) == (12, 13)


def test_min_intensity_ignores_pixels_on_or_outside_circle():
    eq = np.full((21, 21), 100, np.uint8)
    eq[10, 16] = 0  # on the circle: excluded
    eq[10, 11] = 50
    assert min_intensity_center(eq, Circle(10, 10, 6)) == (11, 10)


def test_localize_shape_mismatch():
    with pytest.raises(ValueError):
        localize_center(np.ones((4, 4), np.uint8), np.ones((4, 5), np.uint8))


# ---------------------------------------------------------------- run

def two_disk_frame(centers, r=9, size=(200, 160)):
    w, h = size
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.full((h, w), 190, np.uint8)
    for cx, cy in centers:
        img[(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = 70
        img[(xx - cx) ** 2 + (yy - cy) ** 2 <= 4] = 20
    return img


def test_run_maps_coordinates_to_frame():
    # region (100, 50) 40x33: T_e crops round(9.9) = 10 rows, eye at local (20, 15)
    frame = two_disk_frame([(120, 75), (40, 75)])
    regions = (Rect(100, 50, 40, 33), Rect(20, 50, 40, 33))
    res = run(frame, PipelineConfig(), regions=regions)
    assert res.right.crop_offset == 10
    assert res.right.center == (120, 75) and res.left.center == (40, 75)
    assert res.right.method == HOUGH_MIN_INTENSITY
    c = res.right.circle_in_frame
    assert (c.cx, c.cy) == (120, 75)
    assert res.left.region.rect.contains(*res.left.center)


def test_run_all_bright_regions_fall_back():
    frame = np.full((100, 100), 230, np.uint8)
    regions = (Rect(10, 10, 30, 20), Rect(60, 10, 30, 20))
    res = run(frame, regions=regions)
    assert res.left.method == res.right.method == REGION_CENTER_FALLBACK
    # local centre (15, 7) of the 30x14 cropped region
    assert res.left.center == (25, 10 + 6 + 7) and res.right.center == (75, 23)


def test_run_rejects_bad_regions_before_image_work():
    with pytest.raises(ConfigError):
        run(np.zeros((50, 50), np.uint8), regions=(Rect(0, 0, 10, 10), Rect(45, 0, 10, 10)))
    with pytest.raises(ConfigError):
        run(np.zeros((50, 50), np.uint8))


def test_run_is_translation_equivariant():
    frame, left, right = synth_frame(np.random.default_rng(5))
    base = run(frame, regions=(left.region, right.region))
    dx, dy = 7, -5
    moved = np.roll(frame, (dy, dx), axis=(0, 1))
    shift = lambda r: Rect(r.x + dx, r.y + dy, r.w, r.h)
    res = run(moved, regions=(shift(left.region), shift(right.region)))
    assert res.left.center == (base.left.center[0] + dx, base.left.center[1] + dy)
    assert res.right.center == (base.right.center[0] + dx, base.right.center[1] + dy)


def test_run_deterministic():
    frame, left, right = synth_frame(np.random.default_rng(9))
    assert run(frame, regions=(left.region, right.region)) == run(frame, regions=(left.region, right.region))


def test_synthetic_frames_within_two_pixels():
    ok = 0
    for seed in range(40):
        frame, left, right = synth_frame(np.random.default_rng(seed))
        res = run(frame, regions=(right.region, left.region))  # order is restored by x
        ok += (math.dist(res.left.center, (left.cx, left.cy)) <= 2
               and math.dist(res.right.center, (right.cx, right.cy)) <= 2)
    assert ok >= 38


def test_builtin_cascade_path_is_total():
    from eyecenter.cascade import builtin_cascade
    frame = np.zeros((60, 80), np.uint8)
    res = run(frame, face_model=builtin_cascade("face"), eye_model=builtin_cascade("eye"))
    assert res.face_source == "full_frame"
    for eye in (res.left, res.right):
        assert eye.region.rect.contains(*eye.center)


# ----------------------------------------------------------------- SZP

def test_szp_single_dark_pixel():
    img = np.full((40, 50), 200, np.uint8)
    img[22, 31] = 0
    roi = szp_roi(img)
    assert roi == Rect(31 - 10, 22 - 10, 20, 20)


def test_szp_uniform_anchors_top_left():
    assert szp_roi(np.full((40, 50), 90, np.uint8)) == Rect(0, 0, 20, 20)


def test_szp_hair_band_misses_the_iris():
    img = disk_region(w=60, h=50, cx=30, cy=32, r=8, ground=200, iris=60)
    img[0:4, :] = 10  # dark hair across the top
    roi = szp_roi(img)
    assert roi.y == 0
    assert not roi.contains(30, 32)
    # without the band the ROI holds the iris centre
    assert szp_roi(disk_region(w=60, h=50, cx=30, cy=32, r=8)).contains(30, 32)


# ------------------------------------------------------------ manifest

def test_regions_manifest_round_trip():
    line = format_regions_line("a.pgm", Rect(1, 2, 3, 4), Rect(5, 6, 7, 8))
    text = "# header\n" + line + "  # trailing\n\n"
    assert parse_regions_manifest(text) == {"a.pgm": (Rect(1, 2, 3, 4), Rect(5, 6, 7, 8))}


@pytest.mark.parametrize("text", ["a.pgm 1 2 3", "a.pgm 1 2 3 4 5 6 7 x", "a.pgm 1 2 0 4 5 6 7 8"])
def test_regions_manifest_errors(text):
    with pytest.raises(ConfigError, match="line 1"):
        parse_regions_manifest(text)


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(t_b=256)
    with pytest.raises(ValueError):
        PipelineConfig(t_e=1.0)
    with pytest.raises(ValueError):
        PipelineConfig(smooth_kernel_size=4)
    assert PipelineConfig().with_threshold(90).t_b == 90
