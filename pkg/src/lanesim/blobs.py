"""Connected-component analysis and the two-bar midline deflection estimate.

The lane signal is a dimensionless "deflection": the horizontal drift of the
lane midline per 1000 units of vertical extent, positive when the lane veers
to the right of the camera axis, clamped to [-1000, 1000].
"""

import math
from dataclasses import dataclass

import numpy as np

from .image import BinaryImage

DEFLECTION_LIMIT = 1000.0


class DetectionFailure(Exception):
    """Raised when a frame does not yield a usable lane estimate."""


@dataclass(frozen=True)
class Blob:
    """One connected component of foreground pixels.

    bbox is (xmin, ymin, xmax, ymax), inclusive.  orientation is the major-axis
    angle 0.5 * atan2(2*mu11, mu20 - mu02) in (-pi/2, pi/2]; a single pixel or a
    perfectly symmetric blob reports 0.
    """

    label: int
    area: int
    centroid: tuple[float, float]
    bbox: tuple[int, int, int, int]
    orientation: float


@dataclass(frozen=True)
class LaneEstimate:
    """Lane midline sampled at two rows, bottom nearer the camera."""

    bottom: tuple[float, float]
    top: tuple[float, float]
    deflection: float


def deflection_from_line(bottom: tuple[float, float], top: tuple[float, float]) -> float:
    """Deflection of the midline through ``bottom`` and ``top``.

    1000 * (top.x - bottom.x) / (bottom.y - top.y), clamped to +/-1000.
    Requires bottom.y > top.y (bottom is the row nearer the camera).
    """
    dy = bottom[1] - top[1]
    if dy <= 0:
        raise ValueError(f"bottom.y ({bottom[1]}) must exceed top.y ({top[1]})")
    d = 1000.0 * (top[0] - bottom[0]) / dy
    return max(-DEFLECTION_LIMIT, min(DEFLECTION_LIMIT, d))


def _runs_of(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decompose a mask into horizontal runs (row, col_start, col_end_exclusive).

    Runs are emitted in row-major order.  A guard column keeps runs from
    wrapping across row boundaries.
    """
    h, w = mask.shape
    padded = np.zeros((h, w + 1), dtype=bool)
    padded[:, :w] = mask
    flat = padded.ravel()
    edges = np.diff(flat.astype(np.int8), prepend=0, append=0)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    rows = starts // (w + 1)
    return rows, starts - rows * (w + 1), ends - rows * (w + 1)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # Keep the earlier run as root so first-encounter order survives.
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def label_components(img: BinaryImage, connectivity: int = 8) -> list[Blob]:
    """Label foreground components 1..K in row-major first-encounter order.

    connectivity 4 joins edge-adjacent pixels; 8 also joins diagonals.
    Centroids and bounding boxes are exact; second moments are accumulated
    as integers so the orientation is reproducible.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    rows, starts, ends = _runs_of(img.mask)
    n = len(rows)
    if n == 0:
        return []

    uf = _UnionFind(n)
    slack = 1 if connectivity == 8 else 0
    # Row-major runs: link each run to overlapping runs on the previous row.
    row_first: dict[int, int] = {}
    for i in range(n):
        row_first.setdefault(int(rows[i]), i)
    for i in range(n):
        r = int(rows[i])
        j = row_first.get(r - 1)
        if j is None:
            continue
        while j < n and rows[j] == r - 1:
            # Half-open column spans [start, end); adjacency with optional
            # one-column slack for the diagonal case.
            if starts[j] < ends[i] + slack and starts[i] < ends[j] + slack:
                uf.union(i, j)
            j += 1

    # Map union-find roots to labels in order of first run appearance.
    label_of_root: dict[int, int] = {}
    run_label = np.empty(n, dtype=np.int64)
    for i in range(n):
        root = uf.find(i)
        if root not in label_of_root:
            label_of_root[root] = len(label_of_root) + 1
        run_label[i] = label_of_root[root]

    k = len(label_of_root)
    area = [0] * k
    sx = [0] * k
    sy = [0] * k
    sxx = [0] * k
    syy = [0] * k
    sxy = [0] * k
    xmin = [None] * k
    xmax = [None] * k
    ymin = [None] * k
    ymax = [None] * k

    def _sum_sq(m: int) -> int:
        # 0^2 + 1^2 + ... + m^2
        return m * (m + 1) * (2 * m + 1) // 6

    for i in range(n):
        lab = int(run_label[i]) - 1
        y = int(rows[i])
        a, b = int(starts[i]), int(ends[i])  # cols [a, b)
        cnt = b - a
        run_sx = (a + b - 1) * cnt // 2
        area[lab] += cnt
        sx[lab] += run_sx
        sy[lab] += y * cnt
        sxx[lab] += _sum_sq(b - 1) - _sum_sq(a - 1)
        syy[lab] += y * y * cnt
        sxy[lab] += y * run_sx
        xmin[lab] = a if xmin[lab] is None else min(xmin[lab], a)
        xmax[lab] = b - 1 if xmax[lab] is None else max(xmax[lab], b - 1)
        ymin[lab] = y if ymin[lab] is None else min(ymin[lab], y)
        ymax[lab] = y if ymax[lab] is None else max(ymax[lab], y)

    blobs = []
    for lab in range(k):
        npix = area[lab]
        cx = sx[lab] / npix
        cy = sy[lab] / npix
        # Central moments from exact integer raw moments.
        mu20 = (npix * sxx[lab] - sx[lab] * sx[lab]) / npix
        mu02 = (npix * syy[lab] - sy[lab] * sy[lab]) / npix
        mu11 = (npix * sxy[lab] - sx[lab] * sy[lab]) / npix
        theta = 0.5 * math.atan2(2.0 * mu11, mu20 - mu02)
        blobs.append(
            Blob(
                label=lab + 1,
                area=npix,
                centroid=(cx, cy),
                bbox=(xmin[lab], ymin[lab], xmax[lab], ymax[lab]),
                orientation=theta,
            )
        )
    return blobs


def select_lane_blobs(blobs: list[Blob], min_area: int) -> tuple[Blob, Blob]:
    """Pick the two largest blobs with area >= min_area, returned (left, right).

    Equal areas fall back to the smaller label; left/right is decided by
    centroid x.  Fewer than two qualifying blobs is a detection failure.
    """
    qualified = [b for b in blobs if b.area >= min_area]
    if len(qualified) < 2:
        raise DetectionFailure(
            f"need two blobs with area >= {min_area}, found {len(qualified)}"
        )
    qualified.sort(key=lambda b: (-b.area, b.label))
    a, b = qualified[0], qualified[1]
    if (a.centroid[0], a.label) <= (b.centroid[0], b.label):
        return a, b
    return b, a


def _axis_x_at(blob: Blob, y: float) -> float:
    """x of the blob's major axis (through the centroid) at row y, clamped to its bbox."""
    cx, cy = blob.centroid
    sin_t = math.sin(blob.orientation)
    cos_t = math.cos(blob.orientation)
    if abs(sin_t) < 1e-12:
        x = cx  # axis horizontal: fall back to the centroid column
    else:
        x = cx + (y - cy) * (cos_t / sin_t)
    return max(float(blob.bbox[0]), min(float(blob.bbox[2]), x))


def midline_from_blobs(left: Blob, right: Blob, anchor_x: float) -> LaneEstimate:
    """Sight line from the sensor axis to the lane midline ahead.

    The midline's far point is the average of the two bar-axis positions at
    each blob's top bounding-box row.  The near point is anchored on the
    sensor's straight-ahead column ``anchor_x`` at the average bottom row, so
    the deflection measures the bearing toward the lane ahead: it grows with
    lateral displacement away from the midline and with heading away from the
    lane direction, both with the sign a `servo = center + k*deflection`
    steering law needs to converge.  (Using the midline's own near point
    instead flips the displacement term: standing right of the lane would
    then read as "steer right", and no gain stabilizes that loop.)
    """
    ly0, ly1 = left.bbox[1], left.bbox[3]
    ry0, ry1 = right.bbox[1], right.bbox[3]
    top = (
        (_axis_x_at(left, ly0) + _axis_x_at(right, ry0)) / 2.0,
        (ly0 + ry0) / 2.0,
    )
    bottom = (float(anchor_x), (ly1 + ry1) / 2.0)
    if bottom[1] <= top[1]:
        raise DetectionFailure("degenerate midline: blobs have no vertical extent")
    return LaneEstimate(bottom=bottom, top=top, deflection=deflection_from_line(bottom, top))
