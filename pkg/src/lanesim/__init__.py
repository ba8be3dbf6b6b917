"""Closed-loop lane keeping on synthetic camera frames.

A deterministic simulator renders what a small forward camera sees of a
taped test lane, three detectors reduce each frame to a lane deflection,
and three controllers (open-loop stepper, feedback law, cloned network)
steer a bicycle-model vehicle around the circuit.
"""

from .birdseye import (
    BirdsEyeSpec,
    CameraModel,
    Homography,
    analytic_homography,
    estimate_homography,
    lane_estimate_birdseye,
    warp_birdseye,
)
from .blobs import (
    DEFLECTION_LIMIT,
    Blob,
    DetectionFailure,
    LaneEstimate,
    deflection_from_line,
    label_components,
    midline_from_blobs,
    select_lane_blobs,
)
from .config import RunConfig, SimParams, load_config, reference_config, save_config
from .control import (
    MlpPolicy,
    PidGains,
    PidState,
    TrainConfig,
    init_policy,
    load_policy,
    mlp_forward,
    mlp_train_clone,
    openloop_step,
    pid_step,
    save_policy,
    speed_law,
)
from .episode import EpisodeLog, collect_demonstrations, make_controller, make_detector, run_episode
from .hough import Accumulator, HoughLine, HoughParams, average_boundary_lines, find_peaks, hough_accumulate
from .image import (
    BinaryImage,
    GrayImage,
    PnmParseError,
    RectRoi,
    apply_roi,
    bottom_fraction_roi,
    read_pnm,
    rgb_to_gray,
    threshold,
    write_pnm,
)
from .stats import ComparisonReport, SeriesStats, compare_report, describe
from .world import (
    Arc,
    OffTrackError,
    RenderSpec,
    Straight,
    TrackSpec,
    VehicleParams,
    VehicleState,
    default_track,
    lateral_error,
    render_frame,
    s_curve_track,
    step_vehicle,
)

__version__ = "0.1.0"
