"""Command-line entry point: ``uptransfer <subcommand> ...``."""
import argparse
import json
import logging
import sys
from pathlib import Path

from .data_model import (DataError, frame_path, load_clip, load_frames, parse_keypoint_file, save_clip, save_png,
                         serialize_keypoints)
from .fixtures import gen_puppet_clip
from .metrics import MetricsError, evaluate
from .nets import Checkpoint
from .pose_norm import (StatisticsError, compute_pose_stats, fit_normalization, normalize_sequence,
                        save_transform)
from .raster import (CanvasSpec, compose_ubkp_fl, render_faup_grid, render_landmarks, render_overlay,
                     render_stick_figure)
from .report import write_eval_report, write_training_report
from .trainer import ConfigError, TrainConfig, TransferError, train_landmark_stage, train_video_stage, transfer

log = logging.getLogger("uptransfer")

RENDER_KINDS = ("stick", "faup", "landmark", "overlay", "ubkp_fl")


def _canvas_args(p):
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--line-width", type=int, default=1)
    p.add_argument("--point-radius", type=int, default=1)


def _canvas(ns) -> CanvasSpec:
    return CanvasSpec(ns.width, ns.height, ns.line_width, ns.point_radius)


def cmd_gen_fixtures(ns) -> int:
    clip = gen_puppet_clip(ns.seed, ns.frames, _canvas(ns), fps=ns.fps, with_frames=not ns.no_frames)
    save_clip(clip, ns.out_dir)
    print(f"wrote {len(clip)} frames (seed {ns.seed}) to {ns.out_dir}")
    return 0


def cmd_normalize(ns) -> int:
    src = parse_keypoint_file(Path(ns.source_keypoints).read_bytes())
    tgt = parse_keypoint_file(Path(ns.target_keypoints).read_bytes())
    s_stats, t_stats = compute_pose_stats(src), compute_pose_stats(tgt)
    t = fit_normalization(s_stats, t_stats)
    out = Path(ns.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(serialize_keypoints(normalize_sequence(t, src)))
    sidecar = Path(ns.transform_out) if ns.transform_out else out.with_suffix(".transform.json")
    save_transform(t, sidecar, s_stats, t_stats)
    print(f"scale {t.scale:.6f} offset ({t.offset[0]:.3f}, {t.offset[1]:.3f}) -> {out}, {sidecar}")
    return 0


def cmd_render(ns) -> int:
    clip = load_clip(ns.clip)
    canvas = _canvas(ns)
    out = Path(ns.out_dir)
    for kind in ns.kinds:
        (out / kind).mkdir(parents=True, exist_ok=True)
    for i, (kf, v, lm) in enumerate(zip(clip.keypoints, clip.faups, clip.landmarks)):
        stick = render_stick_figure(kf, canvas)
        land = render_landmarks(lm, canvas)
        images = {
            "stick": lambda: stick.channels,
            "faup": lambda: render_faup_grid(v, canvas).channels,
            "landmark": lambda: land.channels,
            "overlay": lambda: render_overlay(stick, land),
            "ubkp_fl": lambda: compose_ubkp_fl(stick, land).channels,
        }
        for kind in ns.kinds:
            save_png(frame_path(out / kind, i), images[kind]())
    print(f"rendered {len(clip)} frames x {len(ns.kinds)} kinds to {out}")
    return 0


def _load_train_config(ns, stage):
    """TrainConfig from --config plus flag overrides, with the data dirs and output dir."""
    doc = {}
    if ns.config:
        doc = json.loads(Path(ns.config).read_text())
    paths = doc.pop("paths", {})
    doc.setdefault("stage", stage)
    for key in ("iterations", "seed", "batch_size", "window_L"):
        val = getattr(ns, key, None)
        if val is not None:
            doc[key] = val
    if ns.data:
        paths["data"] = ns.data
    if ns.out_dir:
        paths["out_dir"] = ns.out_dir
    cfg = TrainConfig.from_dict(doc)
    if cfg.stage != stage:
        raise ConfigError(f"config is for stage {cfg.stage!r}, expected {stage!r}")
    if not paths.get("data"):
        raise ConfigError("no training data: pass --data or set paths.data in the config")
    if not paths.get("out_dir"):
        raise ConfigError("no output directory: pass --out-dir or set paths.out_dir in the config")
    data = paths["data"]
    return cfg, ([data] if isinstance(data, str) else list(data)), Path(paths["out_dir"])


def _train_common(p):
    p.add_argument("--config", help="TrainConfig JSON (see README)")
    p.add_argument("--data", nargs="+", help="clip directories (override paths.data)")
    p.add_argument("--out-dir", help="checkpoint and log directory (overrides paths.out_dir)")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--no-report", action="store_true", help="skip the loss-curve figure")


def _finish_training(res, out_dir, ns):
    (out_dir / "summary.json").write_text(json.dumps({
        "checksum": res.checkpoint.checksum,
        "iterations": res.checkpoint.meta["iteration"],
        "final": res.log[-1] if res.log else None,
    }, indent=2))
    if not ns.no_report and res.log:
        write_training_report(out_dir / "train_log.jsonl")
    print(f"checkpoint {out_dir / 'final.npz'} sha256 {res.checkpoint.checksum}")
    return 0


def cmd_train_landmark(ns) -> int:
    cfg, data, out_dir = _load_train_config(ns, "landmark")
    pairs = []
    for d in data:
        clip = load_clip(d)
        pairs.extend(zip(clip.faups, clip.landmarks))
    res = train_landmark_stage(cfg, pairs, out_dir)
    return _finish_training(res, out_dir, ns)


def cmd_train_video(ns) -> int:
    cfg, data, out_dir = _load_train_config(ns, "video")
    res = train_video_stage(cfg, [load_clip(d) for d in data], out_dir)
    return _finish_training(res, out_dir, ns)


def cmd_transfer(ns) -> int:
    doc = json.loads(Path(ns.config).read_text()) if ns.config else {}
    for key in ("landmark_checkpoint", "video_checkpoint", "source", "target", "out_dir"):
        val = getattr(ns, key)
        if val is not None:
            doc[key] = val
    missing = [k for k in ("landmark_checkpoint", "video_checkpoint", "source", "target", "out_dir")
               if not doc.get(k)]
    if missing:
        raise ConfigError(f"transfer needs {', '.join(missing)}")
    source = load_clip(doc["source"])
    target_kps = parse_keypoint_file((Path(doc["target"]) / "keypoints.jsonl").read_bytes())
    res = transfer(source, Checkpoint.load(doc["landmark_checkpoint"]), Checkpoint.load(doc["video_checkpoint"]),
                   compute_pose_stats(target_kps), compute_pose_stats(source.keypoints),
                   compose_mode=doc.get("compose_mode"))
    out = Path(doc["out_dir"])
    (out / "frames").mkdir(parents=True, exist_ok=True)
    for i, fr in enumerate(res.frames):
        save_png(frame_path(out / "frames", i), fr)
    (out / "keypoints.jsonl").write_bytes(serialize_keypoints(res.normalized_keypoints))
    save_transform(res.transform, out / "transform.json")
    print(f"wrote {len(res.frames)} frames to {out / 'frames'}")
    return 0


def cmd_eval(ns) -> int:
    gen = load_frames(ns.generated)
    gt = load_frames(ns.ground_truth)
    report = evaluate(gen, gt)
    out = Path(ns.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.to_json(out)
    print("metric,value")
    print(f"mean_l1,{report.mean_l1:.6f}")
    print(f"psnr,{report.psnr:.4f}")
    print(f"flicker_ratio,{report.flicker_ratio:.4f}")
    if ns.report_dir:
        for p in write_eval_report(report, ns.report_dir, gen, gt):
            log.info("wrote %s", p)
    flicker = None
    if ns.min_flicker is not None or ns.max_flicker is not None:
        flicker = (ns.min_flicker if ns.min_flicker is not None else 0.0,
                   ns.max_flicker if ns.max_flicker is not None else float("inf"))
    problems = report.violations(ns.max_l1, ns.min_psnr, flicker)
    for msg in problems:
        print(f"threshold violated: {msg}", file=sys.stderr)
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uptransfer", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-fixtures", help="write a synthetic puppet clip")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--fps", type=float, default=25.0)
    p.add_argument("--no-frames", action="store_true", help="skip ground-truth PNGs")
    _canvas_args(p)
    p.set_defaults(func=cmd_gen_fixtures)

    p = sub.add_parser("normalize", help="map source keypoints into the target's body frame")
    p.add_argument("--source-keypoints", required=True)
    p.add_argument("--target-keypoints", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--transform-out", help="sidecar JSON path (default: <out>.transform.json)")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("render", help="rasterize a clip's conditioning images to PNG")
    p.add_argument("--clip", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--kinds", nargs="+", choices=RENDER_KINDS, default=["stick", "faup", "landmark", "overlay"])
    _canvas_args(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("train-landmark", help="train the FAUP-to-landmark generator")
    _train_common(p)
    p.set_defaults(func=cmd_train_landmark)

    p = sub.add_parser("train-video", help="train the temporal video generator")
    _train_common(p)
    p.add_argument("--window-L", dest="window_L", type=int)
    p.set_defaults(func=cmd_train_video)

    p = sub.add_parser("transfer", help="drive the target generators with a source clip")
    p.add_argument("--config", help="JSON with the keys below")
    p.add_argument("--landmark-checkpoint", dest="landmark_checkpoint")
    p.add_argument("--video-checkpoint", dest="video_checkpoint")
    p.add_argument("--source", help="source clip directory")
    p.add_argument("--target", help="target clip directory (its keypoints give the body statistics)")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("eval", help="compare generated frames with ground truth")
    p.add_argument("--generated", required=True, help="directory of frame_NNNNN.png")
    p.add_argument("--ground-truth", required=True, help="directory of frame_NNNNN.png")
    p.add_argument("--out", required=True, help="MetricsReport JSON path")
    p.add_argument("--report-dir", help="also write per-frame CSV and figures here")
    p.add_argument("--max-l1", type=float)
    p.add_argument("--min-psnr", type=float)
    p.add_argument("--min-flicker", type=float)
    p.add_argument("--max-flicker", type=float)
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return ns.func(ns)
    except (DataError, ConfigError, TransferError, MetricsError, StatisticsError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
