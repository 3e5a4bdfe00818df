import json
from pathlib import Path

import numpy as np
import pytest

from uptransfer.cli import main
from uptransfer.data_model import load_clip, load_png, parse_keypoint_file
from uptransfer.nets import Checkpoint

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="module")
def clips(tmp_path_factory):
    root = tmp_path_factory.mktemp("clips")
    for seed in (1, 2):
        assert main(["gen-fixtures", "--seed", str(seed), "--frames", "4", "--out-dir", str(root / f"c{seed}"),
                     "--width", "32", "--height", "32"]) == 0
    return root


def test_gen_fixtures_round_trips(clips):
    clip = load_clip(clips / "c1")
    assert len(clip) == 4 and clip.canvas == (32, 32)
    assert sorted(p.name for p in (clips / "c1" / "frames").iterdir())[0] == "frame_00000.png"


def test_normalize_writes_keypoints_and_sidecar(clips, tmp_path):
    out = tmp_path / "norm.jsonl"
    assert main(["normalize", "--source-keypoints", str(clips / "c1" / "keypoints.jsonl"),
                 "--target-keypoints", str(clips / "c2" / "keypoints.jsonl"), "--out", str(out)]) == 0
    assert len(parse_keypoint_file(out.read_bytes())) == 4
    side = json.loads(out.with_suffix(".transform.json").read_text())
    assert side["transform"]["scale"] > 0 and "target_stats" in side


def test_normalize_self_is_identity(clips, tmp_path):
    kp = clips / "c1" / "keypoints.jsonl"
    out = tmp_path / "same.jsonl"
    assert main(["normalize", "--source-keypoints", str(kp), "--target-keypoints", str(kp), "--out", str(out)]) == 0
    assert parse_keypoint_file(out.read_bytes()) == parse_keypoint_file(kp.read_bytes())


def test_render_emits_all_kinds(clips, tmp_path):
    assert main(["render", "--clip", str(clips / "c1"), "--out-dir", str(tmp_path),
                 "--width", "32", "--height", "32"]) == 0
    for kind, ch in (("stick", 3), ("faup", 1), ("landmark", 1), ("overlay", 3)):
        files = sorted((tmp_path / kind).glob("*.png"))
        assert len(files) == 4
        assert load_png(files[0]).shape == (ch, 32, 32)


def _train_args(stage, clips, out, **extra):
    cfg = json.loads((CONFIGS / f"{stage}.json").read_text())
    cfg.update(ngf=4, ndf=4, batch_size=2, checkpoint_interval=0,
               canvas={"width": 32, "height": 32, "line_width": 1, "point_radius": 1}, **extra)
    path = out.parent / f"{stage}_cfg.json"
    path.write_text(json.dumps(cfg))
    return ["train-" + stage, "--config", str(path), "--data", str(clips / "c1"), "--out-dir", str(out),
            "--iterations", "2"]


def test_train_transfer_eval_pipeline(clips, tmp_path):
    lm_dir, vid_dir, tr_dir = tmp_path / "lm", tmp_path / "vid", tmp_path / "tr"
    assert main(_train_args("landmark", clips, lm_dir)) == 0
    assert main(_train_args("video", clips, vid_dir)) == 0
    for d in (lm_dir, vid_dir):
        assert (d / "final.npz").exists() and (d / "loss_curves.png").exists()
        assert len((d / "train_log.jsonl").read_text().splitlines()) == 2
    assert Checkpoint.load(vid_dir / "final.npz").meta["window_L"] == 1
    assert main(["transfer", "--landmark-checkpoint", str(lm_dir / "final.npz"),
                 "--video-checkpoint", str(vid_dir / "final.npz"), "--source", str(clips / "c2"),
                 "--target", str(clips / "c1"), "--out-dir", str(tr_dir)]) == 0
    frames = sorted((tr_dir / "frames").glob("*.png"))
    assert len(frames) == 4
    assert json.loads((tr_dir / "transform.json").read_text())["transform"]["scale"] > 0

    report = tmp_path / "metrics.json"
    rc = main(["eval", "--generated", str(tr_dir / "frames"), "--ground-truth", str(clips / "c1" / "frames"),
               "--out", str(report), "--report-dir", str(tmp_path / "figs")])
    assert rc == 0
    doc = json.loads(report.read_text())
    assert set(doc) >= {"mean_l1", "psnr", "flicker_ratio", "l1_series"}
    assert (tmp_path / "figs" / "metrics_series.png").exists()
    assert (tmp_path / "figs" / "metrics_series.csv").read_text().startswith("frame,l1,psnr,flicker")


def test_eval_threshold_exit_codes(clips, tmp_path, capsys):
    frames = str(clips / "c1" / "frames")
    args = ["eval", "--generated", frames, "--ground-truth", frames, "--out", str(tmp_path / "m.json")]
    assert main(args + ["--max-l1", "0.01", "--min-flicker", "0.5", "--max-flicker", "2"]) == 0
    assert json.loads((tmp_path / "m.json").read_text())["psnr"] == "inf"
    other = str(clips / "c2" / "frames")
    args = ["eval", "--generated", other, "--ground-truth", frames, "--out", str(tmp_path / "m2.json")]
    assert main(args + ["--max-l1", "1e-6"]) == 1
    assert "threshold violated" in capsys.readouterr().err
    assert main(args) == 0


def test_errors_exit_nonzero(clips, tmp_path, capsys):
    assert main(["eval", "--generated", str(tmp_path), "--ground-truth", str(clips / "c1" / "frames"),
                 "--out", str(tmp_path / "x.json")]) == 2
    assert main(["train-video", "--out-dir", str(tmp_path)]) == 2
    assert "no training data" in capsys.readouterr().err


def test_example_configs_parse():
    from uptransfer.trainer import TrainConfig

    for name in ("landmark", "video"):
        doc = json.loads((CONFIGS / f"{name}.json").read_text())
        doc.pop("paths")
        assert TrainConfig.from_dict(doc).stage == name
    assert np.isclose(TrainConfig.from_dict({"stage": "video", "window_L": 1}).lr_g, 2e-4)
