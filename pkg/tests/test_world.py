"""Track geometry, bicycle kinematics, and camera rendering."""

import math

import numpy as np
import pytest

from lanesim.world import (
    Arc,
    OffTrackError,
    RenderSpec,
    Straight,
    TrackSpec,
    VehicleParams,
    VehicleState,
    centerline_at,
    default_track,
    lateral_error,
    nearest_centerline_s,
    render_frame,
    s_curve_track,
    servo_to_delta,
    start_pose,
    step_vehicle,
    unwrap_progress,
    wrap_pi,
)


# --------------------------------------------------------------------------
# Oracles
# --------------------------------------------------------------------------


def dense_centerline(track, resolution=5e-4):
    """Brute-force (s, point, heading) table sampled along the whole track."""
    n = int(math.ceil(track.length / resolution)) + 1
    s = np.linspace(0.0, track.length, n)
    pts = np.empty((n, 2))
    headings = np.empty(n)
    for i, si in enumerate(s):
        (px, py), h = centerline_at(track, si)
        pts[i] = (px, py)
        headings[i] = h
    return s, pts, headings


def brute_force_lateral(track, state, table):
    """Signed offset and heading error via a dense nearest-point scan."""
    _, pts, headings = table
    d2 = (pts[:, 0] - state.x) ** 2 + (pts[:, 1] - state.y) ** 2
    k = int(np.argmin(d2))
    h = headings[k]
    nx, ny = -math.sin(h), math.cos(h)
    offset = (state.x - pts[k, 0]) * nx + (state.y - pts[k, 1]) * ny
    return offset, wrap_pi(state.psi - h)


def exact_constant_input_state(state0, params, steer_servo, speed_cmd, t):
    """Closed-form pose under held commands (circle or straight line)."""
    v = speed_cmd * params.v_max
    delta = servo_to_delta(steer_servo, params)
    omega = (v / params.wheelbase) * math.tan(delta)
    if omega == 0.0:
        return VehicleState(
            x=state0.x + v * t * math.cos(state0.psi),
            y=state0.y + v * t * math.sin(state0.psi),
            psi=state0.psi,
            v=v,
        )
    psi = state0.psi + omega * t
    return VehicleState(
        x=state0.x + (v / omega) * (math.sin(psi) - math.sin(state0.psi)),
        y=state0.y - (v / omega) * (math.cos(psi) - math.cos(state0.psi)),
        psi=psi,
        v=v,
    )


def fit_circle(xs, ys):
    """Algebraic least-squares circle fit; returns (center, radius)."""
    a = np.column_stack([2.0 * xs, 2.0 * ys, np.ones(len(xs))])
    b = xs * xs + ys * ys
    (cx, cy, c), *_ = np.linalg.lstsq(a, b, rcond=None)
    return (cx, cy), math.sqrt(c + cx * cx + cy * cy)


# --------------------------------------------------------------------------
# Angles and track construction
# --------------------------------------------------------------------------


def test_wrap_pi_range_and_fixtures():
    assert wrap_pi(0.0) == 0.0
    assert wrap_pi(math.pi) == pytest.approx(math.pi)
    assert wrap_pi(-math.pi) == pytest.approx(math.pi)
    assert wrap_pi(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_pi(-0.5) == pytest.approx(-0.5)
    for a in np.linspace(-20.0, 20.0, 101):
        w = wrap_pi(float(a))
        assert -math.pi < w <= math.pi
        # wrapping preserves the angle modulo a full turn
        assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-12)
        assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-12)


def test_segment_validation():
    with pytest.raises(ValueError):
        Straight(0.0)
    with pytest.raises(ValueError):
        Arc(0.0, 1.0, "left")
    with pytest.raises(ValueError):
        Arc(1.0, -0.1, "left")
    with pytest.raises(ValueError):
        Arc(1.0, 1.0, "up")
    assert Arc(2.0, 0.5, "right").length == pytest.approx(1.0)


def test_track_validation():
    with pytest.raises(ValueError):
        TrackSpec(segments=())
    with pytest.raises(ValueError):
        TrackSpec(segments=(Straight(1.0),), lane_width=0.0)
    with pytest.raises(ValueError):
        TrackSpec(segments=(Straight(1.0),), tape_width=0.5, lane_width=0.4)
    # a closed declaration must actually return to the start pose
    with pytest.raises(ValueError):
        TrackSpec(segments=(Straight(1.0),), closed=True)
    with pytest.raises(ValueError):
        TrackSpec(segments=(Arc(1.0, math.pi, "left"),), closed=True)


def test_stock_tracks():
    track = default_track()
    assert track.closed
    assert track.length == pytest.approx(9.8 + 4.8 * math.pi)
    pose = start_pose(track)
    assert (pose.x, pose.y, pose.psi, pose.v) == (0.0, 0.0, 0.0, 0.0)

    open_track = s_curve_track()
    assert not open_track.closed
    assert open_track.length == pytest.approx(8.0 + 1.2 * math.pi)


def test_centerline_continuity_at_segment_joints():
    for track in (default_track(), s_curve_track()):
        s0 = 0.0
        for seg in track.segments[:-1]:
            s0 += seg.length
            (xa, ya), ha = centerline_at(track, s0 - 1e-9)
            (xb, yb), hb = centerline_at(track, s0 + 1e-9)
            assert math.hypot(xb - xa, yb - ya) < 1e-6
            assert abs(wrap_pi(hb - ha)) < 1e-6


def test_centerline_tangent_matches_heading():
    track = default_track()
    eps = 1e-6
    for s in np.linspace(0.3, track.length - 0.3, 40):
        (xa, ya), _ = centerline_at(track, s - eps)
        (xb, yb), _ = centerline_at(track, s + eps)
        _, h = centerline_at(track, s)
        assert (xb - xa) / (2 * eps) == pytest.approx(math.cos(h), abs=1e-5)
        assert (yb - ya) / (2 * eps) == pytest.approx(math.sin(h), abs=1e-5)


def test_centerline_clamp_and_wrap():
    open_track = s_curve_track()
    assert centerline_at(open_track, -5.0) == centerline_at(open_track, 0.0)
    assert centerline_at(open_track, 99.0) == centerline_at(open_track, open_track.length)

    closed = default_track()
    (xa, ya), ha = centerline_at(closed, 0.3)
    (xb, yb), hb = centerline_at(closed, closed.length + 0.3)
    assert (xa, ya) == pytest.approx((xb, yb), abs=1e-9)
    assert wrap_pi(ha - hb) == pytest.approx(0.0, abs=1e-9)


def test_nearest_centerline_s_recovers_the_foot_point():
    track = default_track()
    rng = np.random.default_rng(7)
    for _ in range(25):
        s_true = float(rng.uniform(0.1, track.length - 0.1))
        offset = float(rng.uniform(-0.3, 0.3))
        (cx, cy), h = centerline_at(track, s_true)
        px = cx + offset * -math.sin(h)
        py = cy + offset * math.cos(h)
        s_found = nearest_centerline_s(track, px, py)
        assert s_found == pytest.approx(s_true, abs=1e-5)


def test_lateral_error_sign_and_magnitude():
    track = TrackSpec(segments=(Straight(4.0),))
    # right of the path (heading +x, right-hand side is +y here) is positive
    off, herr = lateral_error(track, VehicleState(x=1.0, y=0.1, psi=0.0))
    assert off == pytest.approx(0.1, abs=1e-7)
    assert herr == 0.0
    off, _ = lateral_error(track, VehicleState(x=1.0, y=-0.15, psi=0.0))
    assert off == pytest.approx(-0.15, abs=1e-7)
    _, herr = lateral_error(track, VehicleState(x=1.0, y=0.0, psi=0.2))
    assert herr == pytest.approx(0.2, abs=1e-12)


def test_lateral_error_matches_brute_force_scan():
    track = default_track()
    table = dense_centerline(track)
    rng = np.random.default_rng(11)
    for _ in range(20):
        s_true = float(rng.uniform(0.0, track.length))
        offset = float(rng.uniform(-0.35, 0.35))
        (cx, cy), h = centerline_at(track, s_true)
        state = VehicleState(
            x=cx + offset * -math.sin(h),
            y=cy + offset * math.cos(h),
            psi=h + float(rng.uniform(-0.5, 0.5)),
        )
        got_off, got_herr = lateral_error(track, state)
        exp_off, exp_herr = brute_force_lateral(track, state, table)
        assert got_off == pytest.approx(exp_off, abs=1e-4)
        assert got_herr == pytest.approx(exp_herr, abs=1e-3)


def test_lateral_error_raises_off_track():
    track = TrackSpec(segments=(Straight(4.0),))
    with pytest.raises(OffTrackError) as err:
        lateral_error(track, VehicleState(x=2.0, y=0.81, psi=0.0))
    assert err.value.offset == pytest.approx(0.81, abs=1e-6)
    # 2 * lane_width is still tolerated
    off, _ = lateral_error(track, VehicleState(x=2.0, y=0.79, psi=0.0))
    assert off == pytest.approx(0.79, abs=1e-6)


def test_unwrap_progress_counts_laps():
    track = default_track()
    s_vals = np.linspace(0.0, 2.2 * track.length, 600)
    xs = np.empty(len(s_vals))
    ys = np.empty(len(s_vals))
    for i, s in enumerate(s_vals):
        (xs[i], ys[i]), _ = centerline_at(track, float(s))
    progress = unwrap_progress(track, xs, ys)
    assert np.all(np.diff(progress) > -1e-9)
    assert progress[0] == pytest.approx(0.0, abs=0.02)
    assert progress[-1] == pytest.approx(2.2 * track.length, abs=0.02)


# --------------------------------------------------------------------------
# Kinematics
# --------------------------------------------------------------------------


def test_servo_to_delta_mapping():
    params = VehicleParams()
    assert servo_to_delta(45.0, params) == 0.0
    assert servo_to_delta(90.0, params) == pytest.approx(params.delta_max)
    assert servo_to_delta(0.0, params) == pytest.approx(-params.delta_max)
    assert servo_to_delta(67.5, params) == pytest.approx(params.delta_max / 2)


def test_zero_steer_heading_never_drifts():
    params = VehicleParams()
    for psi0 in (0.0, 0.3, -1.2):
        state = VehicleState(x=0.0, y=0.0, psi=psi0, v=0.0)
        for _ in range(200):
            state = step_vehicle(state, params, 45.0, 0.6, 0.05)
        assert state.psi == psi0  # bit-exact: tan(0) contributes nothing


def test_step_vehicle_matches_closed_form():
    params = VehicleParams()
    state = VehicleState(x=0.2, y=-0.1, psi=0.4, v=0.0)
    dt, n = 0.05, 400
    rolled = state
    for _ in range(n):
        rolled = step_vehicle(rolled, params, 60.0, 0.5, dt)
    exact = exact_constant_input_state(state, params, 60.0, 0.5, n * dt)
    assert rolled.x == pytest.approx(exact.x, abs=1e-8)
    assert rolled.y == pytest.approx(exact.y, abs=1e-8)
    assert rolled.psi == pytest.approx(exact.psi, abs=1e-10)
    assert rolled.v == exact.v


def test_constant_steer_traces_the_nominal_circle():
    params = VehicleParams()
    delta = servo_to_delta(60.0, params)
    nominal_radius = params.wheelbase / math.tan(delta)
    state = VehicleState(x=0.0, y=0.0, psi=0.0, v=0.0)
    xs, ys = [], []
    for _ in range(400):
        state = step_vehicle(state, params, 60.0, 0.5, 0.05)
        xs.append(state.x)
        ys.append(state.y)
    center, radius = fit_circle(np.array(xs), np.array(ys))
    assert abs(radius - nominal_radius) / nominal_radius < 1e-3
    dists = np.hypot(np.array(xs) - center[0], np.array(ys) - center[1])
    assert np.max(np.abs(dists - nominal_radius)) / nominal_radius < 1e-3


def test_step_vehicle_clamps_out_of_range_commands():
    params = VehicleParams()
    state = VehicleState(x=0.0, y=0.0, psi=0.0, v=0.0)
    hot = step_vehicle(state, params, 120.0, 1.4, 0.05)
    ref = step_vehicle(state, params, 90.0, 1.0, 0.05)
    assert hot == ref
    cold = step_vehicle(state, params, -10.0, -0.2, 0.05)
    ref = step_vehicle(state, params, 0.0, 0.0, 0.05)
    assert cold == ref


def test_step_vehicle_rejects_bad_inputs():
    params = VehicleParams()
    state = VehicleState(x=0.0, y=0.0, psi=0.0, v=0.0)
    with pytest.raises(ValueError):
        step_vehicle(state, params, 45.0, 0.5, 0.0)
    with pytest.raises(ValueError):
        step_vehicle(state, params, math.nan, 0.5, 0.05)
    with pytest.raises(ValueError):
        step_vehicle(state, params, 45.0, math.inf, 0.05)


def test_vehicle_params_validation():
    with pytest.raises(ValueError):
        VehicleParams(wheelbase=0.0)
    with pytest.raises(ValueError):
        VehicleParams(delta_max=2.0)
    with pytest.raises(ValueError):
        VehicleParams(v_max=-1.0)


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------


def straight_view_setup():
    track = TrackSpec(segments=(Straight(5.0),))
    params = VehicleParams()
    state = VehicleState(x=1.0, y=0.0, psi=0.0, v=0.0)
    return track, params, state


def test_render_noise_free_uses_exactly_two_intensities():
    track, params, state = straight_view_setup()
    frame = render_frame(track, state, params, RenderSpec(noise_sigma=0.0), 0)
    values = set(np.unique(frame.pixels).tolist())
    assert values == {30, 200}


def test_render_centered_straight_is_mirror_symmetric():
    track, params, state = straight_view_setup()
    frame = render_frame(track, state, params, RenderSpec(noise_sigma=0.0), 0)
    assert np.array_equal(frame.pixels, frame.pixels[:, ::-1])


def test_render_sky_rows_are_ground_intensity():
    track, params, state = straight_view_setup()
    spec = RenderSpec(noise_sigma=0.0)
    frame = render_frame(track, state, params, spec, 0)
    cam = params.camera
    horizon_row = int(math.ceil(cam.cy - cam.fy * math.tan(cam.pitch)))
    assert np.all(frame.pixels[: horizon_row - 1] == spec.ground_intensity)
    # tape is visible in the lower half
    assert np.any(frame.pixels[60:] == spec.tape_intensity)


def test_render_offset_pose_mirrors_to_opposite_offset():
    track, params, _ = straight_view_setup()
    spec = RenderSpec(noise_sigma=0.0)
    left = render_frame(track, VehicleState(1.0, -0.07, 0.0), params, spec, 0)
    right = render_frame(track, VehicleState(1.0, 0.07, 0.0), params, spec, 0)
    assert np.array_equal(left.pixels, right.pixels[:, ::-1])


def test_render_noise_is_deterministic_per_seed_and_frame():
    track, params, state = straight_view_setup()
    spec = RenderSpec(noise_sigma=2.0, seed=3)
    a = render_frame(track, state, params, spec, frame_index=5)
    b = render_frame(track, state, params, spec, frame_index=5)
    assert np.array_equal(a.pixels, b.pixels)
    c = render_frame(track, state, params, spec, frame_index=6)
    assert not np.array_equal(a.pixels, c.pixels)
    d = render_frame(track, state, params, RenderSpec(noise_sigma=2.0, seed=4), frame_index=5)
    assert not np.array_equal(a.pixels, d.pixels)


def test_render_noise_stays_clamped_to_byte_range():
    track, params, state = straight_view_setup()
    frame = render_frame(track, state, params, RenderSpec(noise_sigma=400.0), 0)
    assert frame.pixels.dtype == np.uint8
    assert frame.pixels.min() == 0
    assert frame.pixels.max() == 255


def test_render_spec_validation():
    with pytest.raises(ValueError):
        RenderSpec(width=0)
    with pytest.raises(ValueError):
        RenderSpec(tape_intensity=300)
    with pytest.raises(ValueError):
        RenderSpec(tape_intensity=210, ground_intensity=200)
    with pytest.raises(ValueError):
        RenderSpec(noise_sigma=-0.1)


def test_render_curved_track_breaks_symmetry():
    track = TrackSpec(
        segments=(Straight(1.0), Arc(1.2, math.pi / 2, "right"), Straight(1.0))
    )
    params = VehicleParams()
    state = VehicleState(x=0.5, y=0.0, psi=0.0, v=0.0)
    frame = render_frame(track, state, params, RenderSpec(noise_sigma=0.0), 0)
    assert not np.array_equal(frame.pixels, frame.pixels[:, ::-1])
