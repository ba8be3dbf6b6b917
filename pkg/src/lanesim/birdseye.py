"""Ground-plane homographies, top-down rewarping, and the bird's-eye lane fit.

Ground coordinates are meters in the camera's footprint frame: X forward along
the optical axis projection, Y to the right, origin directly below the camera.
A ground->image homography H maps (X, Y, 1) to pixel (u, v) up to scale.
"""

import math
from dataclasses import dataclass

import numpy as np

from .blobs import DetectionFailure, LaneEstimate, deflection_from_line
from .image import BinaryImage, GrayImage

HORIZON_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective map, Frobenius-normalized with h[2][2] >= 0."""

    h: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.h, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        norm = float(np.sqrt((m * m).sum()))
        if norm == 0 or not np.isfinite(norm):
            raise ValueError("homography is singular or non-finite")
        m = m / norm
        if m[2, 2] < 0 or (m[2, 2] == 0 and m.ravel()[np.argmax(np.abs(m))] < 0):
            m = -m
        m.setflags(write=False)
        object.__setattr__(self, "h", m)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera looking at flat ground; yaw and roll are zero.

    fx, fy, cx, cy are pixel intrinsics; height is meters above ground;
    pitch is radians downward from horizontal, in (0, pi/2).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    height: float
    pitch: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if self.height <= 0:
            raise ValueError(f"camera height must be positive, got {self.height}")
        if not 0 < self.pitch < math.pi / 2:
            raise ValueError(f"pitch must be in (0, pi/2) radians, got {self.pitch}")


@dataclass(frozen=True)
class BirdsEyeSpec:
    """Top-down output raster: bottom-center pixel sits at ground ``origin``.

    Rows advance meters_per_pixel forward per row upward; columns advance the
    same scale to the right.
    """

    out_width: int = 96
    out_height: int = 120
    meters_per_pixel: float = 0.005
    origin: tuple[float, float] = (0.31, 0.0)

    def __post_init__(self):
        if self.out_width < 2 or self.out_height < 2:
            raise ValueError(
                f"output raster must be at least 2x2, got {self.out_width}x{self.out_height}"
            )
        if self.meters_per_pixel <= 0:
            raise ValueError(f"meters_per_pixel must be > 0, got {self.meters_per_pixel}")

    def ground_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Ground (X, Y) of every output pixel center, as two (h, w) arrays."""
        rows = np.arange(self.out_height)[:, None]
        cols = np.arange(self.out_width)[None, :]
        gx = self.origin[0] + (self.out_height - 1 - rows) * self.meters_per_pixel
        gy = self.origin[1] + (cols - (self.out_width - 1) / 2.0) * self.meters_per_pixel
        return np.broadcast_to(gx, (self.out_height, self.out_width)).copy(), np.broadcast_to(
            gy, (self.out_height, self.out_width)
        ).copy()


def jacobi_eigh(sym: np.ndarray, off_tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors-as-columns), unordered.  Iterates until
    the off-diagonal Frobenius norm drops below ``off_tol``.
    """
    a = np.array(sym, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"matrix must be square, got {a.shape}")
    v = np.eye(n)

    def _off_norm() -> float:
        # Sum the off-diagonal squares directly: subtracting the diagonal
        # energy from the total cancels catastrophically and floors the
        # measured norm at ~norm(a)*sqrt(eps), well above tight tolerances.
        off = a.copy()
        np.fill_diagonal(off, 0.0)
        return math.sqrt(float((off * off).sum()))

    for _ in range(max_sweeps):
        if _off_norm() < off_tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                diff = a[q, q] - a[p, p]
                # Rotation angles below double precision do nothing but stall
                # the sweep (t underflows to 0); such elements are negligible
                # against the diagonal gap and the off-norm check judges them.
                if apq == 0.0 or abs(apq) < 1e-18 * abs(diff):
                    continue
                tau = diff / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    if _off_norm() >= off_tol:
        raise RuntimeError(f"Jacobi sweep did not converge in {max_sweeps} sweeps")
    return np.diag(a).copy(), v


def _normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Similarity transform taking points to zero centroid / mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    shifted = pts - centroid
    mean_dist = float(np.sqrt((shifted**2).sum(axis=1)).mean())
    scale = math.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    t = np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )
    return shifted * scale, t


def estimate_homography(
    pairs: list[tuple[tuple[float, float], tuple[float, float]]]
) -> tuple[Homography, float]:
    """Direct linear transform from ((u, v), (X, Y)) correspondences.

    Maps ground (X, Y) to image (u, v).  Both point sets are normalized, the
    stacked 2n x 9 constraint system is reduced through its 9x9 normal matrix,
    and the null direction comes from the Jacobi eigen-solver.  Returns the
    homography and the mean reprojection error in pixels.
    """
    if len(pairs) < 4:
        raise ValueError(f"need at least 4 correspondences, got {len(pairs)}")
    img_pts = np.array([p[0] for p in pairs], dtype=np.float64)
    gnd_pts = np.array([p[1] for p in pairs], dtype=np.float64)
    if not (np.isfinite(img_pts).all() and np.isfinite(gnd_pts).all()):
        raise ValueError("correspondences contain non-finite values")

    gn, t_gnd = _normalize_points(gnd_pts)
    im, t_img = _normalize_points(img_pts)

    n = len(pairs)
    a = np.zeros((2 * n, 9))
    for i in range(n):
        x, y = gn[i]
        u, v = im[i]
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]

    evals, evecs = jacobi_eigh(a.T @ a)
    order = np.argsort(evals)
    sigma = np.sqrt(np.maximum(evals[order], 0.0))
    if sigma[1] - sigma[0] < 1e-9:
        raise ValueError(
            "degenerate correspondences: solution direction is not unique "
            f"(two smallest singular values {sigma[0]:.3e}, {sigma[1]:.3e})"
        )
    h_norm = evecs[:, order[0]].reshape(3, 3)
    h = np.linalg.inv(t_img) @ h_norm @ t_gnd
    homography = Homography(h)

    err = 0.0
    for i in range(n):
        pu, pv = apply_homography(homography, (float(gnd_pts[i, 0]), float(gnd_pts[i, 1])))
        err += math.hypot(pu - img_pts[i, 0], pv - img_pts[i, 1])
    return homography, err / n


def analytic_homography(cam: CameraModel) -> Homography:
    """Exact ground->image homography of a pitched pinhole camera.

    Composes intrinsics with the rigid pose: camera at ``height`` above the
    ground origin, optical axis pitched down, no yaw or roll.
    """
    sp, cp = math.sin(cam.pitch), math.cos(cam.pitch)
    k = np.array([[cam.fx, 0.0, cam.cx], [0.0, cam.fy, cam.cy], [0.0, 0.0, 1.0]])
    # Columns map ground X, ground Y, and the fixed camera offset.
    m = np.array(
        [
            [0.0, 1.0, 0.0],
            [-sp, 0.0, cam.height * cp],
            [cp, 0.0, cam.height * sp],
        ]
    )
    return Homography(k @ m)


def apply_homography(h: Homography, point: tuple[float, float]) -> tuple[float, float]:
    """Map a point through the homography; points on the horizon are rejected."""
    x, y = point
    vec = h.h @ np.array([x, y, 1.0])
    if abs(vec[2]) <= HORIZON_EPS:
        raise ValueError(f"point ({x}, {y}) maps to the horizon (w = {vec[2]:.3e})")
    return float(vec[0] / vec[2]), float(vec[1] / vec[2])


def invert_homography(h: Homography) -> Homography:
    return Homography(np.linalg.inv(h.h))


def warp_birdseye(
    img: GrayImage, h_ground_to_image: Homography, spec: BirdsEyeSpec, fill: int = 0
) -> GrayImage:
    """Resample the camera frame onto a top-down ground raster.

    Every output pixel is back-projected through the homography and sampled
    bilinearly; source coordinates outside the frame (or on the horizon)
    produce ``fill``.
    """
    gx, gy = spec.ground_grid()
    hm = h_ground_to_image.h
    w_coord = hm[2, 0] * gx + hm[2, 1] * gy + hm[2, 2]
    valid = np.abs(w_coord) > HORIZON_EPS
    w_safe = np.where(valid, w_coord, 1.0)
    u = (hm[0, 0] * gx + hm[0, 1] * gy + hm[0, 2]) / w_safe
    v = (hm[1, 0] * gx + hm[1, 1] * gy + hm[1, 2]) / w_safe

    h_src, w_src = img.pixels.shape
    inside = valid & (u >= 0) & (u <= w_src - 1) & (v >= 0) & (v <= h_src - 1)
    u = np.where(inside, u, 0.0)
    v = np.where(inside, v, 0.0)

    u0 = np.clip(np.floor(u).astype(np.int64), 0, max(w_src - 2, 0))
    v0 = np.clip(np.floor(v).astype(np.int64), 0, max(h_src - 2, 0))
    u1 = np.minimum(u0 + 1, w_src - 1)
    v1 = np.minimum(v0 + 1, h_src - 1)
    fu = u - u0
    fv = v - v0
    px = img.pixels.astype(np.float64)
    top = px[v0, u0] * (1 - fu) + px[v0, u1] * fu
    bot = px[v1, u0] * (1 - fu) + px[v1, u1] * fu
    sample = top * (1 - fv) + bot * fv
    out = np.where(inside, np.clip(np.rint(sample), 0, 255), fill).astype(np.uint8)
    return GrayImage(out)


def _fit_column_of_row(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    """Least-squares x = m*y + c through foreground pixel centers."""
    design = np.stack([ys, np.ones_like(ys)], axis=1)
    sol, _, rank, _ = np.linalg.lstsq(design, xs, rcond=None)
    if rank < 2:
        raise DetectionFailure("degenerate boundary fit: pixels span a single row")
    return float(sol[0]), float(sol[1])


def lane_estimate_birdseye(warped: BinaryImage, min_pixels: int = 10) -> LaneEstimate:
    """Lane sight line from a thresholded top-down frame.

    Fits x = m*y + c to each half's foreground, averages the halves into a
    midline, and reports the bearing from the raster's bottom-center (the
    vehicle's own column) to the midline's crossing of the top (farthest)
    row.  Both lateral displacement and heading then enter the deflection
    with the sign a proportional steering law needs (see midline_from_blobs).
    """
    h, w = warped.mask.shape
    split = int(math.ceil(w / 2.0))
    fits = []
    for left in (True, False):
        cols = warped.mask[:, :split] if left else warped.mask[:, split:]
        ys, xs = np.nonzero(cols)
        if len(xs) < min_pixels:
            raise DetectionFailure(
                f"{'left' if left else 'right'} half has {len(xs)} foreground pixels, "
                f"need {min_pixels}"
            )
        if not left:
            xs = xs + split
        fits.append(_fit_column_of_row(xs.astype(np.float64), ys.astype(np.float64)))

    c_mid = (fits[0][1] + fits[1][1]) / 2.0  # per-half intercepts at row 0, averaged
    bottom = ((w - 1) / 2.0, float(h - 1))
    top = (c_mid, 0.0)  # midline at row 0, the far edge of the ground window
    return LaneEstimate(bottom=bottom, top=top, deflection=deflection_from_line(bottom, top))


def parse_correspondences(text: str) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Read "u v X Y" lines; '#' starts a comment, blank lines are skipped."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(
                f"line {lineno}: expected 4 fields 'u v X Y', got {len(parts)}"
            )
        try:
            u, v, x, y = (float(p) for p in parts)
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric field in {line!r}") from None
        pairs.append(((u, v), (x, y)))
    if not pairs:
        raise ValueError("correspondence file contains no data lines")
    return pairs


def format_homography(h: Homography) -> str:
    """Three rows of three decimals, full precision."""
    return "\n".join(" ".join(repr(float(x)) for x in row) for row in h.h) + "\n"


def parse_homography(text: str) -> Homography:
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append([float(p) for p in line.split()])
    arr = np.array(rows, dtype=np.float64)
    if arr.shape != (3, 3):
        raise ValueError(f"homography text must hold 3 rows of 3 numbers, got shape {arr.shape}")
    return Homography(arr)
