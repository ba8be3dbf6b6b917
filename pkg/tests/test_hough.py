"""Hough accumulator/peak tests against a brute-force reference."""

import math

import numpy as np
import pytest

from lanesim.blobs import DetectionFailure
from lanesim.hough import (
    Accumulator,
    HoughLine,
    HoughParams,
    average_boundary_lines,
    find_peaks,
    hough_accumulate,
)
from lanesim.image import BinaryImage


def brute_force_accumulator(mask, params):
    """Per-pixel, per-theta voting loop mirroring the accumulator contract."""
    h, w = mask.shape
    diag = math.hypot(w, h)
    rho_offset = math.ceil(diag / params.rho_resolution)
    n_rho = 2 * rho_offset + 1
    votes = np.zeros((params.theta_bins, n_rho), dtype=np.int64)
    # same association as the accumulator's bin table: i * (pi / bins)
    step = math.pi / params.theta_bins
    thetas = [-math.pi / 2 + i * step for i in range(params.theta_bins)]
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            for i, th in enumerate(thetas):
                rho = x * math.cos(th) + y * math.sin(th)
                j = int(np.rint(rho / params.rho_resolution)) + rho_offset
                votes[i, j] += 1
    return votes, rho_offset, thetas


def brute_force_peaks(votes, params):
    """Reference peak picker: threshold, strict window max, ordered ties."""
    nt, nr = votes.shape
    r = params.nms_radius
    peaks = []
    for i in range(nt):
        for j in range(nr):
            v = votes[i, j]
            if v < params.peak_threshold:
                continue
            best = True
            for ti in range(max(0, i - r), min(nt, i + r + 1)):
                for tj in range(max(0, j - r), min(nr, j + r + 1)):
                    if votes[ti, tj] > v or (votes[ti, tj] == v and (ti, tj) < (i, j)):
                        best = False
                        break
                if not best:
                    break
            if best:
                peaks.append((int(v), i, j))
    peaks.sort(key=lambda p: (-p[0], p[1], p[2]))
    return peaks[: params.max_peaks]


def test_accumulator_and_peaks_match_brute_force_on_random_masks():
    rng = np.random.default_rng(77)
    params = HoughParams(peak_threshold=3, theta_bins=24, rho_resolution=1.0,
                         nms_radius=2, max_peaks=8)
    for trial in range(200):
        h = int(rng.integers(2, 17))
        w = int(rng.integers(2, 17))
        mask = rng.random((h, w)) < rng.uniform(0.1, 0.6)
        acc = hough_accumulate(BinaryImage(mask), params)
        votes, rho_offset, thetas = brute_force_accumulator(mask, params)
        assert acc.rho_offset == rho_offset
        assert np.array_equal(acc.votes, votes), f"trial {trial}: accumulator differs"
        got = [(p.votes, p.theta, p.rho) for p in find_peaks(acc, params)]
        want = [
            (v, thetas[i], (j - rho_offset) * params.rho_resolution)
            for v, i, j in brute_force_peaks(votes, params)
        ]
        assert got == want, f"trial {trial}: peak list differs"


def test_total_votes_equals_pixels_times_theta_bins():
    rng = np.random.default_rng(8)
    mask = rng.random((12, 12)) < 0.5
    params = HoughParams(peak_threshold=1, theta_bins=30)
    acc = hough_accumulate(BinaryImage(mask), params)
    assert acc.votes.sum() == mask.sum() * params.theta_bins


def test_vertical_line_recovered_within_one_bin():
    mask = np.zeros((16, 16), dtype=bool)
    mask[:, 5] = True  # x = 5: rho 5, theta 0
    params = HoughParams(peak_threshold=10, theta_bins=180)
    acc = hough_accumulate(BinaryImage(mask), params)
    top = find_peaks(acc, params)[0]
    assert top.votes == 16
    assert abs(top.theta - 0.0) <= math.pi / params.theta_bins + 1e-12
    assert abs(top.rho - 5.0) <= params.rho_resolution


def test_horizontal_line_recovered_within_one_bin():
    mask = np.zeros((16, 16), dtype=bool)
    mask[7, :] = True  # y = 7: rho 7 at theta +pi/2, or rho -7 at -pi/2
    params = HoughParams(peak_threshold=10, theta_bins=180)
    acc = hough_accumulate(BinaryImage(mask), params)
    top = find_peaks(acc, params)[0]
    assert top.votes == 16
    assert abs(abs(top.theta) - math.pi / 2) <= math.pi / params.theta_bins
    assert abs(abs(top.rho) - 7.0) <= params.rho_resolution


def test_diagonal_line_recovered_within_one_bin():
    n = 16
    mask = np.eye(n, dtype=bool)  # y = x: x cos(-45) + y sin(-45) = 0
    params = HoughParams(peak_threshold=n - 2, theta_bins=180)
    acc = hough_accumulate(BinaryImage(mask), params)
    top = find_peaks(acc, params)[0]
    assert abs(top.theta + math.pi / 4) <= math.pi / params.theta_bins + 1e-12
    assert abs(top.rho) <= params.rho_resolution


def test_ideal_line_through_arbitrary_point_and_angle():
    # pixels along x*cos(t) + y*sin(t) = rho for a few (rho, t) combos
    params = HoughParams(peak_threshold=8, theta_bins=90, rho_resolution=1.0)
    for rho_true, theta_true in [(4.0, 0.3), (-2.0, -0.7), (9.0, 1.2)]:
        mask = np.zeros((16, 16), dtype=bool)
        count = 0
        for y in range(16):
            s = math.sin(theta_true)
            c = math.cos(theta_true)
            if abs(c) < 1e-9:
                continue
            x = (rho_true - y * s) / c
            xi = int(round(x))
            if 0 <= xi < 16:
                mask[y, xi] = True
                count += 1
        if count < params.peak_threshold:
            continue
        acc = hough_accumulate(BinaryImage(mask), params)
        peaks = find_peaks(acc, params)
        assert peaks, f"no peak for rho={rho_true}, theta={theta_true}"
        best = peaks[0]
        assert abs(best.theta - theta_true) <= 2 * math.pi / params.theta_bins
        assert abs(best.rho - rho_true) <= 2 * params.rho_resolution


def test_find_peaks_tie_breaks_toward_smaller_bins():
    # hand-built accumulator with two equal plateau cells inside one window
    params = HoughParams(peak_threshold=5, theta_bins=4, rho_resolution=1.0,
                         nms_radius=1, max_peaks=8)
    votes = np.zeros((4, 9), dtype=np.int64)
    votes[1, 3] = 7
    votes[1, 4] = 7  # equal neighbor, larger rho bin: loses the tie
    votes[3, 8] = 6
    acc = Accumulator(votes=votes, rho_resolution=1.0, rho_offset=4,
                      thetas=np.linspace(-math.pi / 2, math.pi / 2, 4, endpoint=False))
    peaks = find_peaks(acc, params)
    assert [(p.votes, p.rho) for p in peaks] == [(7, 3 - 4), (6, 8 - 4)]


def test_max_peaks_truncates():
    mask = np.zeros((8, 8), dtype=bool)
    mask[0, 0] = True
    params = HoughParams(peak_threshold=1, theta_bins=16, nms_radius=0, max_peaks=3)
    acc = hough_accumulate(BinaryImage(mask), params)
    assert len(find_peaks(acc, params)) == 3


def test_params_validation():
    with pytest.raises(ValueError):
        HoughParams(peak_threshold=0)
    with pytest.raises(ValueError):
        HoughParams(peak_threshold=1, theta_bins=0)
    with pytest.raises(ValueError):
        HoughParams(peak_threshold=1, rho_resolution=0.0)
    with pytest.raises(ValueError):
        HoughParams(peak_threshold=1, nms_radius=-1)
    with pytest.raises(ValueError):
        HoughParams(peak_threshold=1, max_peaks=0)


def _line(rho, theta, votes):
    return HoughLine(rho=rho, theta=theta, votes=votes)


def test_average_boundary_lines_centered_bars():
    # vertical bars at x=10 and x=50 in an image 61 wide: center 30
    est = average_boundary_lines(
        [_line(10.0, 0.0, 20), _line(50.0, 0.0, 20)], width=61, y_bottom=40.0, y_top=10.0
    )
    assert est.bottom == (30.0, 40.0)
    assert est.top == (30.0, 10.0)
    assert est.deflection == 0.0


def test_average_boundary_lines_vote_weighted_and_anchored():
    # left side has two lines crossing top at x 8 and 14 with votes 10 and 30
    est = average_boundary_lines(
        [_line(8.0, 0.0, 10), _line(14.0, 0.0, 30), _line(50.0, 0.0, 20)],
        width=61, y_bottom=40.0, y_top=10.0,
    )
    left = (8 * 10 + 14 * 30) / 40.0
    assert est.top[0] == pytest.approx((left + 50.0) / 2.0)
    assert est.bottom == (30.0, 40.0)
    expected = 1000.0 * (est.top[0] - 30.0) / 30.0
    assert est.deflection == pytest.approx(expected)


def test_average_boundary_lines_slanted_lines_cross_rows():
    theta = 0.2
    # two slanted lines placed symmetrically around the center column
    width, y_bottom, y_top = 41, 30.0, 5.0
    center = (width - 1) / 2.0
    lines = []
    for x_bot in (center - 12, center + 12):
        rho = x_bot * math.cos(theta) + y_bottom * math.sin(theta)
        lines.append(_line(rho, theta, 15))
    est = average_boundary_lines(lines, width, y_bottom, y_top)
    # symmetric pair: midline top x equals the center shifted by the common slant
    slant_dx = -math.tan(theta) * (y_top - y_bottom)
    assert est.top[0] == pytest.approx(center + slant_dx, abs=1e-9)
    assert est.deflection == pytest.approx(1000.0 * slant_dx / (y_bottom - y_top), abs=1e-6)


def test_average_boundary_lines_failures():
    with pytest.raises(DetectionFailure, match="both sides"):
        average_boundary_lines([_line(10.0, 0.0, 5)], width=61, y_bottom=40.0, y_top=10.0)
    with pytest.raises(ValueError):
        average_boundary_lines([_line(10.0, 0.0, 5)], width=61, y_bottom=10.0, y_top=40.0)
    # a horizontal member cannot be assigned to a side
    with pytest.raises(DetectionFailure, match="horizontal"):
        average_boundary_lines(
            [_line(5.0, math.pi / 2, 5), _line(50.0, 0.0, 5)],
            width=61, y_bottom=40.0, y_top=10.0,
        )
