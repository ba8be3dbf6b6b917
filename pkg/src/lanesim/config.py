"""Run configuration: JSON schema, defaults, and the reference setup."""

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

from .birdseye import CameraModel
from .world import Arc, RenderSpec, Straight, TrackSpec, VehicleParams, default_track, s_curve_track

DETECTOR_TYPES = ("blob", "hough", "birdseye")
CONTROLLER_TYPES = ("normal", "pid", "nn")

TRACK_PRESETS = {
    "default": default_track,
    "s-curve": s_curve_track,
}


@dataclass(frozen=True)
class SimParams:
    dt: float = 0.05
    duration: float = 170.0
    seed: int = 0
    dump_frames: bool = False
    v_floor: float = 0.25
    v_ceil: float = 0.60

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"sim.dt must be > 0, got {self.dt}")
        if self.duration <= 0:
            raise ValueError(f"sim.duration must be > 0, got {self.duration}")
        if not 0 <= self.v_floor <= self.v_ceil <= 1:
            raise ValueError(
                f"need 0 <= v_floor <= v_ceil <= 1, got {self.v_floor}, {self.v_ceil}"
            )


@dataclass(frozen=True)
class RunConfig:
    track: TrackSpec = field(default_factory=default_track)
    render: RenderSpec = RenderSpec()
    vehicle: VehicleParams = VehicleParams()
    detector: dict = field(default_factory=dict)
    controller: dict = field(default_factory=dict)
    sim: SimParams = SimParams()

    def __post_init__(self):
        object.__setattr__(self, "detector", _merged_detector(self.detector))
        object.__setattr__(self, "controller", _merged_controller(self.controller))


def _merged_detector(overrides: dict) -> dict:
    base = {
        "type": "blob",
        "threshold": 128,
        "invert": True,
        "roi_fraction": 0.6,
        "min_area_fraction": 0.001,
        "connectivity": 8,
        "hough": {
            "theta_bins": 180,
            "rho_resolution": 1.0,
            "peak_threshold_fraction": 0.2,
            "nms_radius": 2,
            "max_peaks": 8,
        },
        "birdseye": {
            "out_width": 96,
            "out_height": 120,
            "meters_per_pixel": 0.0075,
            "origin_x": 0.31,
            "min_pixels": 10,
        },
    }
    merged = _deep_merge(base, overrides or {})
    if merged["type"] not in DETECTOR_TYPES:
        raise ValueError(
            f"detector.type must be one of {', '.join(DETECTOR_TYPES)}, got {merged['type']!r}"
        )
    return merged


def _merged_controller(overrides: dict) -> dict:
    base = {
        "type": "pid",
        "normal": {"dead_band": 700.0},
        "pid": {"kp": 0.03, "ki": 0.002, "kd": 0.018, "integral_clamp": 2000.0},
        "nn": {
            "policy_file": None,
            "hidden": 16,
            "learning_rate": 1e-4,
            "epochs": 250,
            "batch_size": 64,
            "sigma": 4.0,
        },
    }
    merged = _deep_merge(base, overrides or {})
    if merged["type"] not in CONTROLLER_TYPES:
        raise ValueError(
            f"controller.type must be one of {', '.join(CONTROLLER_TYPES)}, "
            f"got {merged['type']!r}"
        )
    return merged


def _deep_merge(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for key, value in overrides.items():
        if key not in base:
            raise ValueError(f"unknown config key {key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(base[key], value)
        else:
            out[key] = value
    return out


# --------------------------------------------------------------------------
# JSON (de)serialization
# --------------------------------------------------------------------------


def track_from_dict(d: dict) -> TrackSpec:
    if "preset" in d:
        preset = d["preset"]
        if preset not in TRACK_PRESETS:
            raise ValueError(
                f"unknown track preset {preset!r}; choices: {', '.join(sorted(TRACK_PRESETS))}"
            )
        track = TRACK_PRESETS[preset]()
        kwargs = {k: d[k] for k in ("lane_width", "tape_width") if k in d}
        return replace(track, **kwargs) if kwargs else track
    segments = []
    for i, seg in enumerate(d.get("segments", [])):
        kind = seg.get("kind")
        if kind == "straight":
            segments.append(Straight(length=float(seg["length"])))
        elif kind == "arc":
            segments.append(
                Arc(
                    radius=float(seg["radius"]),
                    sweep=math.radians(float(seg["sweep_deg"])),
                    direction=seg["direction"],
                )
            )
        else:
            raise ValueError(f"track.segments[{i}].kind must be 'straight' or 'arc', got {kind!r}")
    return TrackSpec(
        segments=tuple(segments),
        lane_width=float(d.get("lane_width", 0.40)),
        tape_width=float(d.get("tape_width", 0.019)),
        closed=bool(d.get("closed", False)),
    )


def track_to_dict(track: TrackSpec) -> dict:
    segments = []
    for seg in track.segments:
        if isinstance(seg, Straight):
            segments.append({"kind": "straight", "length": seg.length})
        else:
            segments.append(
                {
                    "kind": "arc",
                    "radius": seg.radius,
                    "sweep_deg": math.degrees(seg.sweep),
                    "direction": seg.direction,
                }
            )
    return {
        "segments": segments,
        "lane_width": track.lane_width,
        "tape_width": track.tape_width,
        "closed": track.closed,
    }


def track_digest(track: TrackSpec) -> str:
    """Short stable identifier of the track geometry."""
    blob = json.dumps(track_to_dict(track), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def config_from_dict(d: dict) -> RunConfig:
    known = {"track", "render", "vehicle", "detector", "controller", "sim"}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config sections: {', '.join(sorted(unknown))}")

    track = track_from_dict(d["track"]) if "track" in d else default_track()
    render = RenderSpec(**d.get("render", {}))

    vd = dict(d.get("vehicle", {}))
    cam_d = vd.pop("camera", {})
    defaults = VehicleParams()
    if "pitch_deg" in cam_d:
        cam_d["pitch"] = math.radians(cam_d.pop("pitch_deg"))
    camera = replace(defaults.camera, **cam_d) if cam_d else defaults.camera
    if "delta_max_deg" in vd:
        vd["delta_max"] = math.radians(vd.pop("delta_max_deg"))
    vehicle = replace(defaults, camera=camera, **vd)

    sim = SimParams(**d.get("sim", {}))
    return RunConfig(
        track=track,
        render=render,
        vehicle=vehicle,
        detector=d.get("detector", {}),
        controller=d.get("controller", {}),
        sim=sim,
    )


def config_to_dict(config: RunConfig) -> dict:
    cam = config.vehicle.camera
    return {
        "track": track_to_dict(config.track),
        "render": {
            "width": config.render.width,
            "height": config.render.height,
            "tape_intensity": config.render.tape_intensity,
            "ground_intensity": config.render.ground_intensity,
            "noise_sigma": config.render.noise_sigma,
            "seed": config.render.seed,
        },
        "vehicle": {
            "wheelbase": config.vehicle.wheelbase,
            "delta_max_deg": math.degrees(config.vehicle.delta_max),
            "v_max": config.vehicle.v_max,
            "cam_offset": config.vehicle.cam_offset,
            "camera": {
                "fx": cam.fx,
                "fy": cam.fy,
                "cx": cam.cx,
                "cy": cam.cy,
                "height": cam.height,
                "pitch_deg": math.degrees(cam.pitch),
            },
        },
        "detector": config.detector,
        "controller": config.controller,
        "sim": {
            "dt": config.sim.dt,
            "duration": config.sim.duration,
            "seed": config.sim.seed,
            "dump_frames": config.sim.dump_frames,
            "v_floor": config.sim.v_floor,
            "v_ceil": config.sim.v_ceil,
        },
    }


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(data)


def save_config(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def reference_config() -> RunConfig:
    """The stock comparison setup: default closed track, blob detector, PID gains."""
    return RunConfig()
