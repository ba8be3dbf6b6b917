"""Line detection via the (rho, theta) Hough transform.

A line is x*cos(theta) + y*sin(theta) = rho with theta in [-90, +90) degrees,
so near-vertical lane bars sit near theta = 0.  Lane boundaries found as
accumulator peaks are averaged per side and reduced to the same midline
deflection signal the blob detector produces.
"""

import math
from dataclasses import dataclass

import numpy as np

from .blobs import DetectionFailure, LaneEstimate, deflection_from_line
from .image import BinaryImage


@dataclass(frozen=True)
class HoughParams:
    """Accumulator shape and peak-picking knobs.

    peak_threshold is the minimum vote count for a peak; a useful value scales
    with the expected line length (e.g. 30% of the ROI height).
    """

    peak_threshold: int
    theta_bins: int = 180
    rho_resolution: float = 1.0
    nms_radius: int = 2
    max_peaks: int = 8

    def __post_init__(self):
        if self.peak_threshold < 1:
            raise ValueError(f"peak_threshold must be >= 1, got {self.peak_threshold}")
        if self.theta_bins < 1:
            raise ValueError(f"theta_bins must be >= 1, got {self.theta_bins}")
        if self.rho_resolution <= 0:
            raise ValueError(f"rho_resolution must be > 0, got {self.rho_resolution}")
        if self.nms_radius < 0:
            raise ValueError(f"nms_radius must be >= 0, got {self.nms_radius}")
        if self.max_peaks < 1:
            raise ValueError(f"max_peaks must be >= 1, got {self.max_peaks}")


@dataclass(frozen=True, eq=False)
class Accumulator:
    """Vote grid indexed [theta_bin, rho_bin].

    rho bin j holds rho = (j - rho_offset) * rho_resolution; theta bin i holds
    theta = -pi/2 + i * pi / theta_bins.
    """

    votes: np.ndarray
    rho_resolution: float
    rho_offset: int
    thetas: np.ndarray

    def rho_of_bin(self, j: int) -> float:
        return (j - self.rho_offset) * self.rho_resolution

    def theta_of_bin(self, i: int) -> float:
        return float(self.thetas[i])


@dataclass(frozen=True)
class HoughLine:
    rho: float
    theta: float
    votes: int


def _theta_table(theta_bins: int) -> np.ndarray:
    return -math.pi / 2 + np.arange(theta_bins) * (math.pi / theta_bins)


def hough_accumulate(img: BinaryImage, params: HoughParams) -> Accumulator:
    """Vote every foreground pixel into every theta bin of the accumulator."""
    h, w = img.mask.shape
    diag = math.hypot(w, h)
    rho_offset = math.ceil(diag / params.rho_resolution)
    n_rho = 2 * rho_offset + 1
    thetas = _theta_table(params.theta_bins)
    votes = np.zeros((params.theta_bins, n_rho), dtype=np.int64)

    ys, xs = np.nonzero(img.mask)
    if len(xs) > 0:
        cos_t = np.cos(thetas)
        sin_t = np.sin(thetas)
        # rho for every (pixel, theta) pair; bin by rounding to the grid.
        rho = np.outer(xs, cos_t) + np.outer(ys, sin_t)
        bins = np.rint(rho / params.rho_resolution).astype(np.int64) + rho_offset
        theta_idx = np.broadcast_to(np.arange(params.theta_bins), bins.shape)
        flat = theta_idx.ravel() * n_rho + bins.ravel()
        counts = np.bincount(flat, minlength=params.theta_bins * n_rho)
        votes += counts.reshape(params.theta_bins, n_rho)

    return Accumulator(
        votes=votes,
        rho_resolution=params.rho_resolution,
        rho_offset=rho_offset,
        thetas=thetas,
    )


def find_peaks(acc: Accumulator, params: HoughParams) -> list[HoughLine]:
    """Cells that meet the vote threshold and win their NMS neighborhood.

    A cell wins if every neighbor in the (2r+1)^2 window (clipped at the grid
    edge) has strictly fewer votes, with equal-vote ties resolved toward the
    smaller theta bin, then the smaller rho bin.  Peaks come back sorted by
    votes descending (same tie order) and truncated to max_peaks.
    """
    votes = acc.votes
    nt, nr = votes.shape
    r = params.nms_radius
    peaks = []
    for i, j in zip(*np.nonzero(votes >= params.peak_threshold)):
        i, j = int(i), int(j)
        window = votes[max(0, i - r) : min(nt, i + r + 1), max(0, j - r) : min(nr, j + r + 1)]
        v = votes[i, j]
        if v < window.max():
            continue
        ti, tj = np.nonzero(window == v)
        ti += max(0, i - r)
        tj += max(0, j - r)
        if min(zip(ti.tolist(), tj.tolist())) < (i, j):
            continue  # an equal neighbor earlier in (theta, rho) order wins
        peaks.append((int(v), i, j))

    peaks.sort(key=lambda p: (-p[0], p[1], p[2]))
    return [
        HoughLine(rho=acc.rho_of_bin(j), theta=acc.theta_of_bin(i), votes=v)
        for v, i, j in peaks[: params.max_peaks]
    ]


def _x_at_row(rho: float, theta: float, y: float) -> float:
    cos_t = math.cos(theta)
    if abs(cos_t) < 1e-12:
        raise DetectionFailure("horizontal line has no single row crossing")
    return (rho - y * math.sin(theta)) / cos_t


def average_boundary_lines(
    lines: list[HoughLine], width: int, y_bottom: float, y_top: float
) -> LaneEstimate:
    """Split lines into left/right boundary groups and reduce to a sight line.

    A line belongs to the left group when it crosses the bottom row left of
    the image center.  Each group is collapsed to its vote-weighted crossing
    of the top row; the midline's far point averages the two sides, and the
    near point is anchored on the center column so the deflection reads as
    the bearing toward the lane ahead (displacement and heading both enter
    with the stabilizing sign — see midline_from_blobs).
    """
    if y_bottom <= y_top:
        raise ValueError(f"y_bottom ({y_bottom}) must exceed y_top ({y_top})")
    center = (width - 1) / 2.0
    groups: dict[bool, list[HoughLine]] = {True: [], False: []}
    for line in lines:
        groups[_x_at_row(line.rho, line.theta, y_bottom) < center].append(line)
    if not groups[True] or not groups[False]:
        raise DetectionFailure(
            f"need boundary lines on both sides, got {len(groups[True])} left / "
            f"{len(groups[False])} right"
        )

    side = {}
    for is_left, members in groups.items():
        total = float(sum(m.votes for m in members))
        side[is_left] = (
            sum(_x_at_row(m.rho, m.theta, y_top) * m.votes for m in members) / total
        )
    bottom = (center, y_bottom)
    top = ((side[True] + side[False]) / 2.0, y_top)
    return LaneEstimate(bottom=bottom, top=top, deflection=deflection_from_line(bottom, top))
