"""Command-line entry points: simulate, detect, calibrate, train-nn, compare."""

import argparse
import json
import os
import sys

import numpy as np

from . import blobs as blobmod
from . import hough as houghmod
from .birdseye import estimate_homography, format_homography, parse_correspondences, warp_birdseye
from .config import RunConfig, config_from_dict, load_config, save_config
from .control import TrainConfig, load_policy, mlp_train_clone, save_policy
from .blobs import DetectionFailure
from .episode import (
    BirdseyeLaneDetector,
    collect_demonstrations,
    make_controller,
    run_episode,
)
from .image import apply_roi, bottom_fraction_roi, read_pnm, threshold, write_pnm
from .stats import compare_report
from .svgplot import emit_svg


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


def _load_run_config(path: str) -> RunConfig:
    if path == "-":
        return config_from_dict(json.load(sys.stdin))
    return load_config(path)


def _read_image(path: str):
    with open(path, "rb") as fh:
        return read_pnm(fh.read())


def _write_image(path: str, img) -> None:
    with open(path, "wb") as fh:
        fh.write(write_pnm(img))


def _resolve_policy(config: RunConfig, config_path: str):
    name = config.controller["nn"].get("policy_file")
    if not name:
        raise ValueError("controller.nn.policy_file is not set; run train-nn first")
    if not os.path.isabs(name) and config_path != "-":
        candidate = os.path.join(os.path.dirname(os.path.abspath(config_path)), name)
        if os.path.exists(candidate):
            name = candidate
    with open(name, "r", encoding="utf-8") as fh:
        return load_policy(fh.read())


def _write_frames(outdir: str):
    frames_dir = os.path.join(outdir, "frames")
    os.makedirs(frames_dir, exist_ok=True)

    def sink(index, frame):
        _write_image(os.path.join(frames_dir, f"frame_{index:05d}.pgm"), frame)

    return sink


def cmd_simulate(args) -> int:
    config = _load_run_config(args.config)
    policy = None
    if config.controller["type"] in ("nn", "neural"):
        policy = _resolve_policy(config, args.config)
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    sink = _write_frames(outdir) if config.sim.dump_frames else None

    log = run_episode(config, policy=policy, frame_sink=sink)
    log_path = os.path.join(outdir, "log.csv")
    with open(log_path, "w") as fh:
        fh.write(log.to_csv())
    save_config(config, os.path.join(outdir, "config.json"))

    print(f"controller: {log.meta['controller']}")
    print(f"status: {log.status}  steps: {len(log)}  laps: {log.meta['laps']:.2f}")
    if len(log):
        offsets = np.abs(log.column("lateral_offset"))
        print(f"max |lateral offset|: {offsets.max():.3f} m")
    print(f"log: {log_path}")
    return 0 if log.status == "completed" else 2


def cmd_detect(args) -> int:
    img = _read_image(args.image)
    config = load_config(args.params) if args.params else RunConfig()
    cfg = dict(config.detector)
    mask = apply_roi(
        threshold(img, cfg["threshold"], cfg["invert"]),
        bottom_fraction_roi(img.width, img.height, cfg["roi_fraction"]),
    )

    if args.method == "blob":
        found = blobmod.label_components(mask, cfg["connectivity"])
        min_area = max(1, int(round(cfg["min_area_fraction"] * img.width * img.height)))
        print("label  area  centroid_x  centroid_y  orientation_deg")
        for b in found:
            print(
                f"{b.label:5d}  {b.area:4d}  {b.centroid[0]:10.2f}  "
                f"{b.centroid[1]:10.2f}  {np.degrees(b.orientation):15.2f}"
            )
        left, right = blobmod.select_lane_blobs(found, min_area)
        est = blobmod.midline_from_blobs(left, right, (img.width - 1) / 2.0)
    elif args.method == "hough":
        roi = bottom_fraction_roi(img.width, img.height, cfg["roi_fraction"])
        hcfg = cfg["hough"]
        params = houghmod.HoughParams(
            peak_threshold=max(1, int(round(hcfg["peak_threshold_fraction"] * (roi.y1 - roi.y0 + 1)))),
            theta_bins=hcfg["theta_bins"],
            rho_resolution=hcfg["rho_resolution"],
            nms_radius=hcfg["nms_radius"],
            max_peaks=hcfg["max_peaks"],
        )
        acc = houghmod.hough_accumulate(mask, params)
        peaks = houghmod.find_peaks(acc, params)
        print("theta_deg     rho  votes")
        for line in peaks:
            print(f"{np.degrees(line.theta):9.2f}  {line.rho:6.1f}  {line.votes:5d}")
        if not peaks:
            return _fail("no accumulator peaks above threshold")
        est = houghmod.average_boundary_lines(
            peaks, img.width, y_bottom=float(roi.y1), y_top=float(roi.y0)
        )
    else:
        det = BirdseyeLaneDetector(cfg, config.vehicle.camera, img.width, img.height)
        warped = warp_birdseye(img, det.homography, det.spec, fill=255)
        out = args.warped or "warped.pgm"
        _write_image(out, warped)
        print(f"warped view: {out}")
        est = det(img)

    print(f"midline: bottom=({est.bottom[0]:.2f}, {est.bottom[1]:.2f}) "
          f"top=({est.top[0]:.2f}, {est.top[1]:.2f})")
    print(f"deflection: {est.deflection:.2f}")
    return 0


def cmd_calibrate(args) -> int:
    with open(args.pairs) as fh:
        pairs = parse_correspondences(fh.read())
    homography, err = estimate_homography(pairs)
    text = format_homography(homography)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"homography: {args.out}")
    else:
        print(text, end="")
    print(f"pairs: {len(pairs)}  mean reprojection error: {err:.6f} px")
    return 0


def cmd_train_nn(args) -> int:
    config = _load_run_config(args.config)
    nn_cfg = config.controller["nn"]
    sigma = args.sigma if args.sigma is not None else nn_cfg["sigma"]
    data = collect_demonstrations(config, episodes=args.episodes, sigma=sigma)
    train_cfg = TrainConfig(
        hidden=nn_cfg["hidden"],
        learning_rate=nn_cfg["learning_rate"],
        epochs=args.epochs if args.epochs is not None else nn_cfg["epochs"],
        batch_size=nn_cfg["batch_size"],
        seed=config.sim.seed,
    )
    policy, rmse = mlp_train_clone(data, train_cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(save_policy(policy))
    print(f"samples: {len(data)}  episodes: {args.episodes}  sigma: {sigma}")
    print(f"holdout rmse: {rmse:.4f} servo units")
    print(f"policy: {args.out}")
    return 0


def cmd_compare(args) -> int:
    config = _load_run_config(args.config)
    policy = _resolve_policy(config, args.config)
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)

    logs = {}
    for kind, name in (("normal", "normal"), ("pid", "pid"), ("nn", "neural")):
        controller = make_controller(config, kind=kind, policy=policy)
        log = run_episode(config, controller=controller)
        logs[name] = log
        with open(os.path.join(outdir, f"log_{name}.csv"), "w") as fh:
            fh.write(log.to_csv())

    report = compare_report(logs)
    with open(os.path.join(outdir, "report.csv"), "w") as fh:
        fh.write(report.to_csv())

    lines = [report.render_text()]
    for name in ("normal", "pid", "neural"):
        log = logs[name]
        offsets = np.abs(log.column("lateral_offset")) if len(log) else np.zeros(1)
        lines.append(
            f"{name}: status={log.status} laps={log.meta['laps']:.2f} "
            f"max|offset|={offsets.max():.3f} m"
        )
    text = "\n".join(lines) + "\n"
    with open(os.path.join(outdir, "report.txt"), "w") as fh:
        fh.write(text)

    svg = emit_svg([(name, logs[name]) for name in ("normal", "pid", "neural")],
                   title="controller comparison")
    with open(os.path.join(outdir, "traces.svg"), "w") as fh:
        fh.write(svg)

    print(text, end="")
    print(f"reports in {outdir}: report.txt report.csv traces.svg "
          f"log_normal.csv log_pid.csv log_neural.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lanesim",
        description="Closed-loop lane keeping on synthetic camera frames.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one closed-loop episode")
    p.add_argument("config", help="run configuration JSON ('-' for stdin)")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="run a detector on a PGM/PPM image")
    p.add_argument("image", help="input image (P5/P6)")
    p.add_argument("--method", choices=("blob", "hough", "birdseye"), default="blob")
    p.add_argument("--params", help="run configuration JSON for detector settings")
    p.add_argument("--warped",
                   help="output path for the birdseye warp (PGM; default: warped.pgm)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("calibrate", help="fit a homography from point pairs")
    p.add_argument("pairs", help="text file of 'u v X Y' correspondences")
    p.add_argument("--out", help="write the 3x3 matrix here instead of stdout")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train-nn", help="clone the feedback controller into a small net")
    p.add_argument("config", help="run configuration JSON ('-' for stdin)")
    p.add_argument("--episodes", type=int, default=4)
    p.add_argument("--sigma", type=float, default=None,
                   help="std dev of the servo perturbation (default: from config)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", default="policy.txt")
    p.set_defaults(func=cmd_train_nn)

    p = sub.add_parser("compare", help="run all three controllers on one setup")
    p.add_argument("config", help="run configuration JSON ('-' for stdin)")
    p.add_argument("--out", default="compare", help="output directory")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, DetectionFailure) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
