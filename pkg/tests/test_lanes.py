import numpy as np
import pytest

from lanempc.imaging import Raster
from lanempc.lanes import (FitError, LaneFit, MissingLaneError, ReferenceTrajectory, RoiLaw,
                           SlidingWindowConfig, column_histogram, find_lane_bases, fit_lanes,
                           lane_center_reference, polyfit, roi_for_speed, sliding_window_collect)


def binary(a):
    return Raster(np.where(np.asarray(a) > 0, 255, 0).astype(np.uint8))


def band_image(cols, w=640, h=480, width=8):
    """White vertical bands; ``cols`` maps a row to the band's left edge."""
    a = np.zeros((h, w), dtype=np.uint8)
    for c in cols:
        for r in range(h):
            x = int(round(c(r)))
            a[r, max(x, 0):max(x + width, 0)] = 255
    return Raster(a)


# -- ROI law -----------------------------------------------------------------------

def test_roi_at_rest():
    assert roi_for_speed(0.0) == 0.55


def test_roi_at_two_meters_per_second():
    assert roi_for_speed(2.0) == pytest.approx(0.55 - 0.10, abs=1e-15)


def test_roi_saturates_at_high_speed():
    assert roi_for_speed(100.0) == 0.30


def test_roi_never_above_cap():
    assert roi_for_speed(0.0, RoiLaw(f0=0.9)) == 0.60


def test_roi_rejects_negative_speed():
    with pytest.raises(ValueError):
        roi_for_speed(-0.1)


def test_roi_monotone_in_speed():
    fr = [roi_for_speed(v) for v in np.linspace(0, 10, 50)]
    assert all(a >= b for a, b in zip(fr, fr[1:]))


# -- histogram ---------------------------------------------------------------------

def test_histogram_of_black_image():
    assert not np.any(column_histogram(Raster.zeros(20, 10), 0, 10))


def test_histogram_single_column():
    a = np.zeros((30, 40))
    a[:, 17] = 1
    hist = column_histogram(binary(a), 10, 30)
    expected = np.zeros(40, dtype=int)
    expected[17] = 20
    assert np.array_equal(hist, expected)


def test_histogram_conserves_pixels(rng):
    a = rng.random((50, 60)) > 0.7
    a[:, 5:15] = True
    a[:, 40:50] = True
    hist = column_histogram(binary(a), 20, 45)
    assert hist.sum() == np.count_nonzero(a[20:45])
    assert hist[5:15].sum() == hist[40:50].sum() == 250


@pytest.mark.parametrize("lo, hi", [(5, 5), (-1, 3), (0, 11)])
def test_histogram_rejects_bad_range(lo, hi):
    with pytest.raises(ValueError):
        column_histogram(Raster.zeros(4, 10), lo, hi)


# -- lane bases --------------------------------------------------------------------

def test_bases_at_peaks():
    hist = np.zeros(640)
    hist[150], hist[490] = 9, 7
    assert find_lane_bases(hist) == (150, 490)


def test_symmetric_bases_mirror():
    hist = np.zeros(640)
    hist[100], hist[539] = 5, 5
    left, right = find_lane_bases(hist)
    assert left + right == 640 - 1


def test_flat_histogram_tie_break():
    assert find_lane_bases(np.ones(640)) == (0, 320)


def test_empty_half_names_side():
    hist = np.zeros(100)
    hist[70] = 1
    with pytest.raises(MissingLaneError, match="left") as exc:
        find_lane_bases(hist)
    assert exc.value.side == "left"
    hist = np.zeros(100)
    hist[10] = 1
    with pytest.raises(MissingLaneError, match="right"):
        find_lane_bases(hist)


# -- sliding windows ---------------------------------------------------------------

def test_vertical_band_fully_collected():
    img = band_image([lambda r: 146, lambda r: 486])
    cfg = SlidingWindowConfig()
    left, right = sliding_window_collect(img, (150, 490), cfg)
    top = int(np.floor(cfg.roi_top_frac * img.height))
    rr, cc = np.nonzero(img.data[top:, :320])
    assert set(map(tuple, left.tolist())) == set(zip((rr + top).tolist(), cc.tolist()))


def test_empty_image_collects_nothing():
    left, right = sliding_window_collect(Raster.zeros(640, 480), (100, 500), SlidingWindowConfig())
    assert len(left) == 0 and len(right) == 0


def test_slanted_band_is_tracked():
    cfg = SlidingWindowConfig(roi_top_frac=0.0)
    win_h = 480 / cfg.n_windows
    # drifts 3 px per window height, upward in the image
    img = band_image([lambda r: 150 + 3 * (479 - r) / win_h], width=8)
    left, _ = sliding_window_collect(img, (154, 500), cfg)
    assert len(left) >= 0.95 * np.count_nonzero(img.data)


def test_collected_pixels_are_white(rng):
    a = rng.random((480, 640)) > 0.97
    img = binary(a)
    for side in sliding_window_collect(img, (150, 490), SlidingWindowConfig(minpix=5)):
        assert np.all(a[side[:, 0], side[:, 1]])


# -- polynomial fit ----------------------------------------------------------------

def test_polyfit_recovers_cubic():
    c = np.array([5.0, 0.2, -0.001, 1e-6])
    rows = np.linspace(0, 479, 10)
    cols = np.polynomial.polynomial.polyval(rows, c)
    got = polyfit(np.column_stack([rows, cols]))
    assert np.max(np.abs(got - c) / np.abs(c)) < 1e-9
    assert np.max(np.abs(np.polynomial.polynomial.polyval(rows, got) - cols)) < 1e-9


def test_polyfit_constant():
    pts = np.column_stack([np.arange(20.0), np.full(20, 42.0)])
    assert np.allclose(polyfit(pts), [42, 0, 0, 0], atol=1e-10)


def test_polyfit_underdetermined():
    with pytest.raises(FitError, match="3 points"):
        polyfit([[0, 1], [1, 2], [2, 3]])


def test_polyfit_repeated_rows_rejected():
    pts = [[5, c] for c in range(10)] + [[6, 1], [7, 2]]
    with pytest.raises(FitError):
        polyfit(pts)


def test_polyfit_is_locally_optimal(rng):
    rows = rng.uniform(200, 480, 300)
    cols = 300 + 0.1 * rows + rng.normal(0, 2, 300)
    pts = np.column_stack([rows, cols])
    c = polyfit(pts)
    # perturb in the scaled basis so each coefficient moves the fit comparably
    scale = np.array([1.0, 1 / 480, 1 / 480 ** 2, 1 / 480 ** 3])
    P = np.polynomial.polynomial

    def sse(coef):
        return float(np.sum((cols - P.polyval(rows, coef)) ** 2))

    best = sse(c)
    for _ in range(1000):
        assert sse(c + 1e-3 * rng.standard_normal(4) * scale) >= best


# -- full fit on rendered roads ----------------------------------------------------------

def _fit(pipeline, frame, v=2.0):
    img, _ = pipeline.binary_birdseye(frame)
    return fit_lanes(img, v, pipeline.cfg.windows, pipeline.cfg.roi)


def test_straight_road_fits_are_near_vertical(pipeline, straight_frame):
    fit = _fit(pipeline, straight_frame)
    rows = np.arange(fit.valid_rows[0], fit.valid_rows[1] + 1)
    for poly, cols in ((fit.left, fit.left_col(rows)), (fit.right, fit.right_col(rows))):
        assert np.ptp(cols) < 0.5
        assert abs(poly[3]) < 1e-6
    assert np.all(fit.right_col(rows) > fit.left_col(rows))


def test_straight_road_center_matches_truth(pipeline, straight_frame):
    fit = _fit(pipeline, straight_frame)
    rows = np.arange(fit.valid_rows[0], fit.valid_rows[1] + 1)
    true_col, _ = pipeline.cfg.ground_to_bev(1.0, 0.0)
    assert np.max(np.abs(fit.center_col(rows) - true_col)) < 2.0


def test_offset_vehicle_shifts_midline_left(pipeline, offset_frame):
    fit = _fit(pipeline, offset_frame)
    rows = np.arange(fit.valid_rows[0], fit.valid_rows[1] + 1)
    mx = pipeline.cfg.m_per_px[0]
    expected = pipeline.cfg.anchor[0] - 0.1 / mx
    assert np.max(np.abs(fit.center_col(rows) - expected)) < 2.0


def test_valid_rows_follow_speed(pipeline, straight_frame):
    img, _ = pipeline.binary_birdseye(straight_frame)
    assert fit_lanes(img, 0.0).valid_rows == (int(0.55 * 480), 479)
    assert fit_lanes(img, 2.0).valid_rows == (int(np.floor(0.45 * 480)), 479)


def test_black_input_raises_missing_lane():
    with pytest.raises(MissingLaneError):
        fit_lanes(Raster.zeros(640, 480), 1.0)


def test_prior_keeps_lines_apart_when_both_drift_into_one_half():
    # both lines in the right half: the histogram would mislabel, the prior does not
    img = band_image([lambda r: 340, lambda r: 560])
    prior = LaneFit(np.array([344.0, 0, 0, 0]), np.array([564.0, 0, 0, 0]), (216, 479))
    fit = fit_lanes(img, 2.0, prior=prior)
    assert fit.left[0] == pytest.approx(343.5, abs=0.1)
    assert fit.right[0] == pytest.approx(563.5, abs=0.1)


# -- reference trajectory -------------------------------------------------------------

SCALE = (0.005, 0.005)
ANCHOR = (319.5, 580.0)


def straight_fit(left=270.0, right=369.0):
    return LaneFit(np.array([left, 0, 0, 0]), np.array([right, 0, 0, 0]), (216, 479))


def test_centered_straight_reference_is_zero():
    ref = lane_center_reference(straight_fit(), SCALE, ANCHOR)
    assert np.max(np.abs(ref.y_lat)) < 1e-9
    assert not np.any(ref.psi) and not np.any(ref.kappa)


def test_shifted_fits_give_constant_offset():
    ref = lane_center_reference(straight_fit(290.0, 389.0), SCALE, ANCHOR)
    assert np.allclose(ref.y_lat, 0.1, atol=1e-12)


def test_stations_are_evenly_spaced():
    ref = lane_center_reference(straight_fit(), SCALE, ANCHOR, n_samples=40)
    ds = np.diff(ref.s)
    assert np.all(ds > 0)
    assert np.allclose(ds, 0.005 * (479 - 216) / 39)
    assert ref.s[0] == pytest.approx((580.0 - 479) * 0.005)


def test_reference_heading_and_curvature_are_consistent():
    # lane-change sized arc; s is forward distance, so dpsi/ds and curvature agree to O(slope^2)
    left = np.array([270.0, 0.0, 0.0, 0.0])
    fit = LaneFit(left + [20.0, -0.03, 5e-5, 0.0], left + [119.0, -0.03, 5e-5, 0.0], (100, 479))
    ref = lane_center_reference(fit, SCALE, ANCHOR, n_samples=200)
    dpsi = np.diff(ref.psi) / np.diff(ref.s)
    mid = 0.5 * (ref.kappa[1:] + ref.kappa[:-1])
    assert np.max(np.abs(dpsi - mid)) < 1e-3


def test_reference_rejects_bad_scale():
    with pytest.raises(ValueError):
        lane_center_reference(straight_fit(), (0.0, 0.005), ANCHOR)


def test_trajectory_requires_increasing_stations():
    with pytest.raises(ValueError):
        ReferenceTrajectory([0.0, 0.0], [0, 0], [0, 0], [0, 0])
    with pytest.raises(ValueError):
        ReferenceTrajectory([0.0, 1.0], [0], [0, 0], [0, 0])


def test_trajectory_sample_extends_along_first_heading():
    ref = ReferenceTrajectory([1.0, 2.0], [0.1, 0.2], [np.arctan(0.1)] * 2, [0.0, 0.0])
    y, psi, _ = ref.sample([0.0, 1.5, 5.0])
    assert y == pytest.approx([0.0, 0.15, 0.2])
    assert psi[0] == pytest.approx(np.arctan(0.1))


def test_window_config_validation():
    with pytest.raises(ValueError):
        SlidingWindowConfig(n_windows=0)
    with pytest.raises(ValueError):
        SlidingWindowConfig(roi_top_frac=1.0)
