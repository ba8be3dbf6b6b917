"""Synthetic taped-lane world: track geometry, vehicle kinematics, camera render.

Plane conventions match the camera image: the vehicle's right-hand side is the
heading rotated by +90 degrees, and a positive heading rate turns the vehicle
to the right.  With that choice a positive road-wheel angle, a positive lane
deflection, and a servo command above 45 all point the same way.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .birdseye import CameraModel

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


def wrap_pi(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(angle + math.pi, TWO_PI)
    if a <= 0:
        a += TWO_PI
    return a - math.pi


class OffTrackError(Exception):
    """Vehicle left the drivable corridor; carries the measured offset."""

    def __init__(self, offset: float, heading_error: float):
        super().__init__(f"vehicle off track: lateral offset {offset:.3f} m")
        self.offset = offset
        self.heading_error = heading_error


@dataclass(frozen=True)
class Straight:
    length: float

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError(f"straight length must be > 0, got {self.length}")


@dataclass(frozen=True)
class Arc:
    """Circular arc: ``sweep`` radians of turn, direction 'left' or 'right'."""

    radius: float
    sweep: float
    direction: str

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"arc radius must be > 0, got {self.radius}")
        if self.sweep <= 0:
            raise ValueError(f"arc sweep must be > 0, got {self.sweep}")
        if self.direction not in ("left", "right"):
            raise ValueError(f"arc direction must be 'left' or 'right', got {self.direction!r}")

    @property
    def length(self) -> float:
        return self.radius * self.sweep


@dataclass(frozen=True)
class TrackSpec:
    """Piecewise straight/arc centerline with taped lane boundaries.

    lane_width is the boundary-center to boundary-center distance; each tape
    strip is tape_width wide, centered lane_width/2 either side of the
    centerline.  A closed track must return to its start pose.
    """

    segments: tuple
    lane_width: float = 0.40
    tape_width: float = 0.019
    closed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("track needs at least one segment")
        for seg in self.segments:
            if not isinstance(seg, (Straight, Arc)):
                raise ValueError(f"unknown segment type {type(seg).__name__}")
        if self.lane_width <= 0 or self.tape_width <= 0:
            raise ValueError("lane_width and tape_width must be > 0")
        if self.tape_width >= self.lane_width:
            raise ValueError(
                f"tape_width {self.tape_width} must be narrower than lane_width {self.lane_width}"
            )
        if self.closed:
            (ex, ey), eh = _segment_chain(self.segments)[-1][2]
            if math.hypot(ex, ey) > 1e-6 or abs(wrap_pi(eh)) > 1e-6:
                raise ValueError(
                    f"closed track does not return to start: end ({ex:.2e}, {ey:.2e}), "
                    f"heading {wrap_pi(eh):.2e} rad"
                )

    @property
    def length(self) -> float:
        return sum(seg.length for seg in self.segments)


@dataclass(frozen=True)
class VehicleState:
    """Rear-axle pose (x, y, psi) and current speed."""

    x: float
    y: float
    psi: float
    v: float = 0.0


@dataclass(frozen=True)
class VehicleParams:
    """Kinematic bicycle plus its forward camera.

    Servo 0..90 maps linearly to road-wheel angle -delta_max..+delta_max (45 is
    straight).  The camera sits cam_offset meters ahead of the rear axle.
    """

    wheelbase: float = 0.26
    delta_max: float = math.pi / 6
    v_max: float = 1.0
    camera: CameraModel = CameraModel(
        fx=65.0, fy=65.0, cx=79.5, cy=59.5, height=0.20, pitch=math.radians(30.0)
    )
    cam_offset: float = 0.26

    def __post_init__(self):
        if self.wheelbase <= 0:
            raise ValueError(f"wheelbase must be > 0, got {self.wheelbase}")
        if not 0 < self.delta_max < math.pi / 2:
            raise ValueError(f"delta_max must be in (0, pi/2), got {self.delta_max}")
        if self.v_max <= 0:
            raise ValueError(f"v_max must be > 0, got {self.v_max}")


@dataclass(frozen=True)
class RenderSpec:
    """Raster size, surface intensities, and the deterministic noise stream."""

    width: int = 160
    height: int = 120
    tape_intensity: int = 30
    ground_intensity: int = 200
    noise_sigma: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"raster must be at least 1x1, got {self.width}x{self.height}")
        for name, value in (("tape_intensity", self.tape_intensity),
                            ("ground_intensity", self.ground_intensity)):
            if not 0 <= value <= 255:
                raise ValueError(f"{name} must be in [0, 255], got {value}")
        if self.tape_intensity >= self.ground_intensity:
            raise ValueError(
                f"tape_intensity {self.tape_intensity} must be darker than "
                f"ground_intensity {self.ground_intensity}"
            )
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


# --------------------------------------------------------------------------
# Centerline geometry
# --------------------------------------------------------------------------

_chain_cache: dict = {}
_sample_cache: dict = {}
_ray_cache: dict = {}


def _right_normal(heading: float) -> tuple[float, float]:
    return (-math.sin(heading), math.cos(heading))


def _segment_chain(segments: tuple):
    """Per segment: (start arclength, start pose, end pose, geometry info).

    Geometry info is ('straight', ax, ay, ux, uy) or
    ('arc', cx, cy, radius, alpha0, sweep, turn_sign).
    """
    key = segments
    cached = _chain_cache.get(key)
    if cached is not None:
        return cached
    chain = []
    x, y, h = 0.0, 0.0, 0.0
    s = 0.0
    for seg in segments:
        start_pose = ((x, y), h)
        if isinstance(seg, Straight):
            ux, uy = math.cos(h), math.sin(h)
            geom = ("straight", x, y, ux, uy)
            x += seg.length * ux
            y += seg.length * uy
        else:
            sign = 1.0 if seg.direction == "right" else -1.0
            nx, ny = _right_normal(h)
            cx = x + sign * seg.radius * nx
            cy = y + sign * seg.radius * ny
            alpha0 = math.atan2(y - cy, x - cx)
            geom = ("arc", cx, cy, seg.radius, alpha0, seg.sweep, sign)
            alpha_end = alpha0 + sign * seg.sweep
            x = cx + seg.radius * math.cos(alpha_end)
            y = cy + seg.radius * math.sin(alpha_end)
            h = h + sign * seg.sweep
        chain.append((s, start_pose, ((x, y), h), seg, geom))
        s += seg.length
    _chain_cache[key] = chain
    return chain


def centerline_at(track: TrackSpec, s: float) -> tuple[tuple[float, float], float]:
    """Point and tangent heading at arclength s; closed tracks wrap modulo length."""
    length = track.length
    if track.closed:
        s = s % length
    else:
        s = min(max(s, 0.0), length)
    chain = _segment_chain(track.segments)
    for i, (s0, ((x0, y0), h0), _, seg, geom) in enumerate(chain):
        if s <= s0 + seg.length or i == len(chain) - 1:
            local = min(max(s - s0, 0.0), seg.length)
            if geom[0] == "straight":
                _, ax, ay, ux, uy = geom
                return (ax + local * ux, ay + local * uy), h0
            _, cx, cy, radius, alpha0, _, sign = geom
            alpha = alpha0 + sign * local / radius
            return (
                (cx + radius * math.cos(alpha), cy + radius * math.sin(alpha)),
                h0 + sign * local / radius,
            )
    raise AssertionError("unreachable")


def start_pose(track: TrackSpec) -> VehicleState:
    (x, y), h = _segment_chain(track.segments)[0][1]
    return VehicleState(x=x, y=y, psi=h, v=0.0)


def _centerline_samples(track: TrackSpec, resolution: float = 0.01):
    """Cached (s_grid, points) table along the whole centerline."""
    key = (track.segments, track.closed, round(resolution, 9))
    cached = _sample_cache.get(key)
    if cached is not None:
        return cached
    length = track.length
    n = max(2, int(math.ceil(length / resolution)) + 1)
    s_grid = np.linspace(0.0, length, n)
    pts = np.empty((n, 2))
    chain = _segment_chain(track.segments)
    starts = np.array([c[0] for c in chain])
    idx = np.clip(np.searchsorted(starts, s_grid, side="right") - 1, 0, len(chain) - 1)
    for i, (s0, _, _, seg, geom) in enumerate(chain):
        sel = idx == i
        if not sel.any():
            continue
        local = np.clip(s_grid[sel] - s0, 0.0, seg.length)
        if geom[0] == "straight":
            _, ax, ay, ux, uy = geom
            pts[sel, 0] = ax + local * ux
            pts[sel, 1] = ay + local * uy
        else:
            _, cx, cy, radius, alpha0, _, sign = geom
            alpha = alpha0 + sign * local / radius
            pts[sel, 0] = cx + radius * np.cos(alpha)
            pts[sel, 1] = cy + radius * np.sin(alpha)
    _sample_cache[key] = (s_grid, pts)
    return s_grid, pts


def nearest_centerline_s(track: TrackSpec, x: float, y: float) -> float:
    """Arclength of the closest centerline point: coarse 1 cm scan, then
    golden-section refinement of the winning bracket."""
    s_grid, pts = _centerline_samples(track)
    d2 = (pts[:, 0] - x) ** 2 + (pts[:, 1] - y) ** 2
    k = int(np.argmin(d2))
    step = s_grid[1] - s_grid[0]
    lo, hi = s_grid[k] - step, s_grid[k] + step
    if not track.closed:
        lo = max(lo, 0.0)
        hi = min(hi, track.length)

    def dist2(s: float) -> float:
        (px, py), _ = centerline_at(track, s)
        return (px - x) ** 2 + (py - y) ** 2

    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = dist2(c), dist2(d)
    while b - a > 1e-7:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = dist2(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = dist2(d)
    s_best = (a + b) / 2.0
    return s_best % track.length if track.closed else min(max(s_best, 0.0), track.length)


def lateral_error(track: TrackSpec, state: VehicleState) -> tuple[float, float]:
    """Signed lateral offset (positive right of path) and wrapped heading error.

    Raises OffTrackError beyond 2 * lane_width of the centerline.
    """
    s = nearest_centerline_s(track, state.x, state.y)
    (cx, cy), heading = centerline_at(track, s)
    nx, ny = _right_normal(heading)
    offset = (state.x - cx) * nx + (state.y - cy) * ny
    heading_err = wrap_pi(state.psi - heading)
    if abs(offset) > 2.0 * track.lane_width:
        raise OffTrackError(offset, heading_err)
    return offset, heading_err


def unwrap_progress(track: TrackSpec, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Cumulative arclength progress for a pose sequence (laps unwrapped)."""
    s_grid, pts = _centerline_samples(track)
    out = np.empty(len(xs))
    for i, (x, y) in enumerate(zip(xs, ys)):
        d2 = (pts[:, 0] - x) ** 2 + (pts[:, 1] - y) ** 2
        out[i] = s_grid[int(np.argmin(d2))]
    if track.closed and len(out) > 1:
        length = track.length
        deltas = np.diff(out)
        deltas = np.where(deltas < -length / 2, deltas + length, deltas)
        deltas = np.where(deltas > length / 2, deltas - length, deltas)
        out = out[0] + np.concatenate([[0.0], np.cumsum(deltas)])
    return out


# --------------------------------------------------------------------------
# Vehicle kinematics
# --------------------------------------------------------------------------


def servo_to_delta(steer_servo: float, params: VehicleParams) -> float:
    return (steer_servo - 45.0) / 45.0 * params.delta_max


def step_vehicle(
    state: VehicleState,
    params: VehicleParams,
    steer_servo: float,
    speed_cmd: float,
    dt: float,
) -> VehicleState:
    """One RK4 step of the kinematic bicycle with held inputs.

    x' = v cos(psi), y' = v sin(psi), psi' = (v / wheelbase) tan(delta).
    Out-of-range commands are clamped and logged.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not (math.isfinite(steer_servo) and math.isfinite(speed_cmd)):
        raise ValueError(f"non-finite command: steer={steer_servo}, speed={speed_cmd}")
    if not 0.0 <= steer_servo <= 90.0:
        log.warning("steer command %.3f outside [0, 90]; clamping", steer_servo)
        steer_servo = min(max(steer_servo, 0.0), 90.0)
    if not 0.0 <= speed_cmd <= 1.0:
        log.warning("speed command %.3f outside [0, 1]; clamping", speed_cmd)
        speed_cmd = min(max(speed_cmd, 0.0), 1.0)

    v = speed_cmd * params.v_max
    delta = servo_to_delta(steer_servo, params)
    psi_rate = (v / params.wheelbase) * math.tan(delta)

    def deriv(psi: float) -> tuple[float, float, float]:
        return v * math.cos(psi), v * math.sin(psi), psi_rate

    k1 = deriv(state.psi)
    k2 = deriv(state.psi + 0.5 * dt * k1[2])
    k3 = deriv(state.psi + 0.5 * dt * k2[2])
    k4 = deriv(state.psi + dt * k3[2])
    return VehicleState(
        x=state.x + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        y=state.y + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
        psi=state.psi + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
        v=v,
    )


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------


def _ray_table(cam: CameraModel, width: int, height: int):
    """Per-pixel ground intersection in the camera footprint frame.

    Returns (valid, forward X, lateral Y); pixels at or above the horizon are
    invalid.  The lateral term is built antisymmetrically about the principal
    column so mirrored pixels back-project to exactly mirrored ground points.
    """
    key = (cam, width, height)
    cached = _ray_cache.get(key)
    if cached is not None:
        return cached
    sp, cp = math.sin(cam.pitch), math.cos(cam.pitch)
    q = (np.arange(height)[:, None] - cam.cy) / cam.fy
    denom = sp + q * cp
    valid = denom > 1e-9
    safe = np.where(valid, denom, 1.0)
    xf = cam.height * (cp - q * sp) / safe
    zc = cam.height / safe
    du = (np.arange(width)[None, :] - cam.cx) / cam.fx
    yr = du * zc
    valid = np.broadcast_to(valid, (height, width))
    xf = np.broadcast_to(xf, (height, width))
    table = (valid, xf, yr)
    _ray_cache[key] = table
    return table


def _boundary_distance_mask(
    track: TrackSpec, wx: np.ndarray, wy: np.ndarray, view_box: tuple
) -> np.ndarray:
    """True where a ground point lies on either taped lane boundary."""
    w2 = track.lane_width / 2.0
    t2 = track.tape_width / 2.0
    tape = np.zeros(wx.shape, dtype=bool)
    vx0, vx1, vy0, vy1 = view_box
    for s0, ((sx, sy), h0), ((ex, ey), _), seg, geom in _segment_chain(track.segments):
        pad = w2 + t2
        bx0, bx1 = min(sx, ex) - pad, max(sx, ex) + pad
        by0, by1 = min(sy, ey) - pad, max(sy, ey) + pad
        if geom[0] == "arc":
            _, cx, cy, radius, _, _, _ = geom
            bx0, bx1 = cx - radius - pad, cx + radius + pad
            by0, by1 = cy - radius - pad, cy + radius + pad
        if bx1 < vx0 or bx0 > vx1 or by1 < vy0 or by0 > vy1:
            continue

        if geom[0] == "straight":
            _, ax, ay, ux, uy = geom
            nx, ny = _right_normal(h0)
            for side in (w2, -w2):
                ox, oy = ax + side * nx, ay + side * ny
                px = wx - ox
                py = wy - oy
                t = np.clip(px * ux + py * uy, 0.0, seg.length)
                d2 = (px - t * ux) ** 2 + (py - t * uy) ** 2
                tape |= d2 <= t2 * t2
        else:
            _, cx, cy, radius, alpha0, sweep, sign = geom
            px = wx - cx
            py = wy - cy
            dist_c = np.hypot(px, py)
            beta = np.arctan2(py, px)
            rel = np.mod(sign * (beta - alpha0), TWO_PI)
            on_arc = rel <= sweep
            alpha_end = alpha0 + sign * sweep
            for rb in (radius - w2, radius + w2):
                d_arc = np.abs(dist_c - rb)
                e0x, e0y = cx + rb * math.cos(alpha0), cy + rb * math.sin(alpha0)
                e1x, e1y = cx + rb * math.cos(alpha_end), cy + rb * math.sin(alpha_end)
                d_ends = np.minimum(np.hypot(wx - e0x, wy - e0y), np.hypot(wx - e1x, wy - e1y))
                d = np.where(on_arc, d_arc, d_ends)
                tape |= d <= t2
    return tape


def render_frame(
    track: TrackSpec,
    state: VehicleState,
    params: VehicleParams,
    spec: RenderSpec,
    frame_index: int = 0,
) -> "GrayImage":
    """Render the forward camera view of the taped lane from a vehicle pose.

    Each pixel is back-projected to the ground plane; points on a tape strip
    take tape_intensity, everything else (including sky above the horizon)
    takes ground_intensity.  Gaussian noise with the spec's sigma is drawn
    from a stream determined by (seed, frame_index) and the result is rounded
    and clamped to [0, 255].
    """
    from .image import GrayImage

    valid, xf, yr = _ray_table(params.camera, spec.width, spec.height)
    tx, ty = math.cos(state.psi), math.sin(state.psi)
    nx, ny = _right_normal(state.psi)
    bx = state.x + params.cam_offset * tx
    by = state.y + params.cam_offset * ty
    wx = bx + xf * tx + yr * nx
    wy = by + xf * ty + yr * ny

    if valid.any():
        pad = track.tape_width
        view_box = (
            float(wx[valid].min()) - pad,
            float(wx[valid].max()) + pad,
            float(wy[valid].min()) - pad,
            float(wy[valid].max()) + pad,
        )
        tape = _boundary_distance_mask(track, wx, wy, view_box) & valid
    else:
        tape = np.zeros((spec.height, spec.width), dtype=bool)

    frame = np.where(tape, spec.tape_intensity, spec.ground_intensity).astype(np.float64)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng((spec.seed, frame_index))
        frame = frame + rng.normal(0.0, spec.noise_sigma, frame.shape)
    return GrayImage(np.clip(np.rint(frame), 0, 255).astype(np.uint8))


# --------------------------------------------------------------------------
# Stock tracks
# --------------------------------------------------------------------------


def s_curve_track() -> TrackSpec:
    """Open S-shaped lane: two straights bridged by opposite quarter turns."""
    return TrackSpec(
        segments=(
            Straight(3.0),
            Arc(1.2, math.pi / 2, "right"),
            Straight(2.0),
            Arc(1.2, math.pi / 2, "left"),
            Straight(3.0),
        ),
        closed=False,
    )


def default_track() -> TrackSpec:
    """Closed circuit with an S-chicane, both curve directions, and a long back straight.

    With quarter-turn radius r and the chicane/corner straights below, the
    back straight must run a + 4r + b + c for the loop to close; the lap is
    9.8 + 4.8*pi = 24.88 m.
    """
    r = 1.2
    q = math.pi / 2
    return TrackSpec(
        segments=(
            Straight(0.5),
            Arc(r, q, "right"),
            Arc(r, q, "left"),
            Straight(0.5),
            Arc(r, q, "left"),
            Arc(r, q, "right"),
            Straight(0.5),
            Arc(r, q, "right"),
            Straight(1.0),
            Arc(r, q, "right"),
            Straight(6.3),
            Arc(r, q, "right"),
            Straight(1.0),
            Arc(r, q, "right"),
        ),
        closed=True,
    )
