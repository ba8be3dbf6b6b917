"""Closed-loop episode runner: render -> detect -> steer -> integrate, logged.

Each control step renders the camera frame for the current pose, reduces it to
a lane deflection, lets the active controller pick servo and speed commands,
records a log row, and advances the bicycle model.  Detection failures hold
the previous steering command and halve the speed command for that step.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import blobs as blobmod
from . import hough as houghmod
from .birdseye import (
    BirdsEyeSpec,
    analytic_homography,
    lane_estimate_birdseye,
    warp_birdseye,
)
from .blobs import DetectionFailure, LaneEstimate
from .config import RunConfig, track_digest
from .control import (
    MlpPolicy,
    PidGains,
    PidState,
    SERVO_CENTER,
    Demonstration,
    mlp_forward,
    openloop_step,
    pid_step,
    speed_law,
)
from .image import GrayImage, bottom_fraction_roi, threshold, apply_roi
from .world import (
    OffTrackError,
    lateral_error,
    render_frame,
    start_pose,
    step_vehicle,
    unwrap_progress,
)

LOG_COLUMNS = (
    "t",
    "x",
    "y",
    "psi",
    "v",
    "deflection",
    "steering",
    "speed_cmd",
    "lateral_offset",
    "heading_error",
    "detector_failure",
)


def _q6(value: float) -> float:
    """Quantize to 6 significant digits — the precision the log file carries."""
    return float(format(float(value), ".6g"))


@dataclass
class EpisodeLog:
    """Column-oriented step log plus run metadata.

    Numeric cells are quantized to 6 significant digits when appended so the
    CSV form round-trips exactly.  ``meta['status']`` is one of 'completed',
    'off-track', or 'fault'.
    """

    meta: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def append(self, **kw):
        row = []
        for col in LOG_COLUMNS:
            value = kw.pop(col)
            row.append(bool(value) if col == "detector_failure" else _q6(value))
        if kw:
            raise ValueError(f"unexpected log fields: {sorted(kw)}")
        self.rows.append(tuple(row))

    def column(self, name: str) -> np.ndarray:
        i = LOG_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    @property
    def deflection(self) -> np.ndarray:
        return self.column("deflection")

    @property
    def steering(self) -> np.ndarray:
        return self.column("steering")

    @property
    def status(self) -> str:
        return self.meta.get("status", "unknown")

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        lines = ["#meta " + json.dumps(self.meta, sort_keys=True)]
        lines.append(",".join(LOG_COLUMNS))
        for row in self.rows:
            cells = []
            for col, value in zip(LOG_COLUMNS, row):
                if col == "detector_failure":
                    cells.append("1" if value else "0")
                else:
                    cells.append(format(value, ".6g"))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "EpisodeLog":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("#meta "):
            raise ValueError("episode CSV must start with a '#meta' line")
        meta = json.loads(lines[0][len("#meta ") :])
        if len(lines) < 2 or lines[1] != ",".join(LOG_COLUMNS):
            raise ValueError("episode CSV header does not match the log schema")
        log = cls(meta=meta)
        for ln in lines[2:]:
            cells = ln.split(",")
            if len(cells) != len(LOG_COLUMNS):
                raise ValueError(f"bad row width: {ln!r}")
            row = []
            for col, cell in zip(LOG_COLUMNS, cells):
                row.append(cell == "1" if col == "detector_failure" else float(cell))
            log.rows.append(tuple(row))
        return log


# --------------------------------------------------------------------------
# Detector adapters
# --------------------------------------------------------------------------


class BlobLaneDetector:
    """threshold -> ROI -> connected components -> two-bar midline."""

    def __init__(self, cfg: dict, width: int, height: int):
        self.threshold = cfg["threshold"]
        self.invert = cfg["invert"]
        self.roi = bottom_fraction_roi(width, height, cfg["roi_fraction"])
        self.min_area = max(1, int(round(cfg["min_area_fraction"] * width * height)))
        self.connectivity = cfg["connectivity"]
        self.anchor_x = (width - 1) / 2.0

    def __call__(self, frame: GrayImage) -> LaneEstimate:
        mask = apply_roi(threshold(frame, self.threshold, self.invert), self.roi)
        found = blobmod.label_components(mask, self.connectivity)
        left, right = blobmod.select_lane_blobs(found, self.min_area)
        return blobmod.midline_from_blobs(left, right, self.anchor_x)


class HoughLaneDetector:
    """threshold -> ROI -> accumulator peaks -> averaged boundary midline."""

    def __init__(self, cfg: dict, width: int, height: int):
        self.threshold = cfg["threshold"]
        self.invert = cfg["invert"]
        self.roi = bottom_fraction_roi(width, height, cfg["roi_fraction"])
        hcfg = cfg["hough"]
        roi_height = self.roi.y1 - self.roi.y0 + 1
        self.params = houghmod.HoughParams(
            peak_threshold=max(1, int(round(hcfg["peak_threshold_fraction"] * roi_height))),
            theta_bins=hcfg["theta_bins"],
            rho_resolution=hcfg["rho_resolution"],
            nms_radius=hcfg["nms_radius"],
            max_peaks=hcfg["max_peaks"],
        )
        self.width = width

    def __call__(self, frame: GrayImage) -> LaneEstimate:
        mask = apply_roi(threshold(frame, self.threshold, self.invert), self.roi)
        acc = houghmod.hough_accumulate(mask, self.params)
        peaks = houghmod.find_peaks(acc, self.params)
        if not peaks:
            raise DetectionFailure("no accumulator peaks above threshold")
        return houghmod.average_boundary_lines(
            peaks, self.width, y_bottom=float(self.roi.y1), y_top=float(self.roi.y0)
        )


class BirdseyeLaneDetector:
    """warp to top-down -> threshold -> per-half line fits -> deflection."""

    def __init__(self, cfg: dict, camera, width: int, height: int):
        bcfg = cfg["birdseye"]
        self.threshold = cfg["threshold"]
        self.invert = cfg["invert"]
        self.spec = BirdsEyeSpec(
            out_width=bcfg["out_width"],
            out_height=bcfg["out_height"],
            meters_per_pixel=bcfg["meters_per_pixel"],
            origin=(bcfg["origin_x"], 0.0),
        )
        self.min_pixels = bcfg["min_pixels"]
        self.homography = analytic_homography(camera)

    def __call__(self, frame: GrayImage) -> LaneEstimate:
        # Fill unmapped raster cells bright so inverted thresholding keeps
        # them background; the view trapezoid does not cover the whole window.
        warped = warp_birdseye(frame, self.homography, self.spec, fill=255)
        mask = threshold(warped, self.threshold, self.invert)
        return lane_estimate_birdseye(mask, min_pixels=self.min_pixels)


def make_detector(config: RunConfig):
    cfg = config.detector
    kind = cfg["type"]
    if kind == "blob":
        return BlobLaneDetector(cfg, config.render.width, config.render.height)
    if kind == "hough":
        return HoughLaneDetector(cfg, config.render.width, config.render.height)
    return BirdseyeLaneDetector(
        cfg, config.vehicle.camera, config.render.width, config.render.height
    )


# --------------------------------------------------------------------------
# Controller adapters
# --------------------------------------------------------------------------


class NormalController:
    name = "normal"

    def __init__(self, dead_band: float):
        self.dead_band = dead_band

    def step(self, deflection: float, dt: float) -> float:
        return openloop_step(deflection, self.dead_band)


class PidController:
    name = "pid"

    def __init__(self, gains: PidGains):
        self.gains = gains
        self.state = PidState()

    def step(self, deflection: float, dt: float) -> float:
        servo, self.state = pid_step(self.gains, self.state, deflection, dt)
        return servo


class FeatureTracker:
    """Running controller features: scaled deflection, previous, clamped integral."""

    def __init__(self, integral_clamp: float):
        self.integral_clamp = integral_clamp
        self.integral = 0.0
        self.prev = None

    def update(self, deflection: float, dt: float) -> np.ndarray:
        self.integral = min(
            max(self.integral + deflection * dt, -self.integral_clamp), self.integral_clamp
        )
        prev = deflection if self.prev is None else self.prev
        feats = np.array([deflection, prev, self.integral]) / 1000.0
        self.prev = deflection
        return feats


class NnController:
    """Runs the cloned policy on the same running features the expert saw."""

    name = "neural"

    def __init__(self, policy: MlpPolicy, integral_clamp: float):
        self.policy = policy
        self.tracker = FeatureTracker(integral_clamp)

    def step(self, deflection: float, dt: float) -> float:
        return mlp_forward(self.policy, self.tracker.update(deflection, dt))


def make_controller(config: RunConfig, kind: str | None = None, policy: MlpPolicy | None = None):
    cfg = config.controller
    kind = kind or cfg["type"]
    if kind == "normal":
        return NormalController(cfg["normal"]["dead_band"])
    if kind == "pid":
        return PidController(PidGains(**cfg["pid"]))
    if kind in ("nn", "neural"):
        if policy is None:
            raise ValueError("neural controller needs a trained policy (see train-nn)")
        return NnController(policy, cfg["pid"]["integral_clamp"])
    raise ValueError(f"unknown controller {kind!r}")


# --------------------------------------------------------------------------
# Episode loop
# --------------------------------------------------------------------------


def run_episode(
    config: RunConfig,
    controller=None,
    policy: MlpPolicy | None = None,
    frame_sink=None,
    steer_noise=None,
) -> EpisodeLog:
    """Run one closed-loop episode and return its log.

    ``controller`` may be a prebuilt adapter (overrides config.controller.type);
    ``frame_sink(index, frame)`` receives each rendered frame when given;
    ``steer_noise(step) -> float`` perturbs the executed servo command (used
    for demonstration collection), while the log keeps the commanded value.

    The frame-noise stream is seeded by render.seed + sim.seed, so changing
    the simulation seed changes the sensor noise while two runs that share a
    config see byte-identical frames.
    """
    detector = make_detector(config)
    if controller is None:
        controller = make_controller(config, policy=policy)

    render_spec = replace(config.render, seed=config.render.seed + config.sim.seed)
    n_steps = int(round(config.sim.duration / config.sim.dt))
    state = start_pose(config.track)
    log = EpisodeLog(
        meta={
            "track": track_digest(config.track),
            "detector": config.detector["type"],
            "controller": controller.name,
            "seed": config.sim.seed,
            "dt": config.sim.dt,
            "duration": config.sim.duration,
            "status": "completed",
        }
    )

    held_steer = SERVO_CENTER
    held_deflection = 0.0
    prev_speed = config.sim.v_ceil
    dt = config.sim.dt

    for k in range(n_steps):
        frame = render_frame(config.track, state, config.vehicle, render_spec, frame_index=k)
        if frame_sink is not None:
            frame_sink(k, frame)

        failed = False
        try:
            estimate = detector(frame)
            deflection = estimate.deflection
        except DetectionFailure:
            failed = True
            deflection = held_deflection

        if failed:
            steer = held_steer
            speed = prev_speed * 0.5
        else:
            if not math.isfinite(deflection):
                log.meta["status"] = "fault"
                log.meta["fault"] = f"non-finite deflection at step {k}"
                break
            steer = controller.step(deflection, dt)
            speed = speed_law(deflection, config.sim.v_floor, config.sim.v_ceil)

        try:
            offset, heading_err = lateral_error(config.track, state)
            off_track = False
        except OffTrackError as exc:
            offset, heading_err = exc.offset, exc.heading_error
            off_track = True

        log.append(
            t=k * dt,
            x=state.x,
            y=state.y,
            psi=state.psi,
            v=state.v,
            deflection=deflection,
            steering=steer,
            speed_cmd=speed,
            lateral_offset=offset,
            heading_error=heading_err,
            detector_failure=failed,
        )
        if off_track:
            log.meta["status"] = "off-track"
            break

        held_steer = steer
        held_deflection = deflection
        prev_speed = speed

        executed_steer = steer
        if steer_noise is not None:
            executed_steer = min(max(steer + steer_noise(k), 0.0), 90.0)
        state = step_vehicle(state, config.vehicle, executed_steer, speed, dt)

    log.meta["laps"] = _laps_completed(config, log)
    return log


def _laps_completed(config: RunConfig, log: EpisodeLog) -> float:
    if len(log) < 2:
        return 0.0
    progress = unwrap_progress(config.track, log.column("x"), log.column("y"))
    return float((progress[-1] - progress[0]) / config.track.length)


# --------------------------------------------------------------------------
# Demonstrations for cloning
# --------------------------------------------------------------------------


def collect_demonstrations(
    config: RunConfig, episodes: int, sigma: float, seed: int | None = None
) -> Demonstration:
    """Run PID-expert episodes with perturbed steering and record (features, label).

    The Gaussian perturbation (std ``sigma`` servo degrees) is injected into
    the executed command only; the recorded label is the expert's unperturbed
    output.  Failure steps contribute no samples.  Episodes that leave the
    track are truncated and kept.
    """
    if episodes < 1:
        raise ValueError(f"need at least one episode, got {episodes}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    base_seed = config.sim.seed if seed is None else seed

    feats = []
    labels = []
    statuses = []
    for ep in range(episodes):
        gains = PidGains(**config.controller["pid"])
        expert = PidController(gains)
        tracker = FeatureTracker(gains.integral_clamp)
        rng = np.random.default_rng((base_seed, 7701, ep))
        cfg_ep = replace(config, sim=replace(config.sim, seed=base_seed + ep))

        class _Recorder:
            name = "pid"

            def step(self, deflection: float, dt: float) -> float:
                feats.append(tracker.update(deflection, dt))
                servo = expert.step(deflection, dt)
                labels.append(servo)
                return servo

        noise = (lambda k: float(rng.normal(0.0, sigma))) if sigma > 0 else None
        log = run_episode(cfg_ep, controller=_Recorder(), steer_noise=noise)
        statuses.append(log.status)

    if not feats:
        raise ValueError("no demonstration samples were produced")
    return Demonstration(
        features=np.array(feats),
        servo=np.array(labels),
        meta={
            "episodes": episodes,
            "sigma": sigma,
            "seed": base_seed,
            "track": track_digest(config.track),
            "noise_sigma": config.render.noise_sigma,
            "statuses": statuses,
        },
    )
