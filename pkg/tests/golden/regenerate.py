"""Rewrite the golden inputs and renders. Run from the repo root:

    python tests/golden/regenerate.py

Only do this when the rasterization contract changes on purpose.
"""
from pathlib import Path

from uptransfer.data_model import save_png, serialize_faups, serialize_keypoints, serialize_landmarks
from uptransfer.fixtures import gen_puppet_clip
from uptransfer.raster import CanvasSpec, render_faup_grid, render_landmarks, render_stick_figure

HERE = Path(__file__).parent
CANVAS = CanvasSpec(64, 64, line_width=1, point_radius=1)


def main():
    clip = gen_puppet_clip(11, 1, CANVAS, with_frames=False)
    (HERE / "keypoints.jsonl").write_bytes(serialize_keypoints(clip.keypoints))
    (HERE / "faup.csv").write_bytes(serialize_faups(clip.faups))
    (HERE / "landmarks.csv").write_bytes(serialize_landmarks(clip.landmarks))
    render_all(HERE)


def render_all(out: Path):
    from uptransfer.data_model import parse_faup_file, parse_keypoint_file, parse_landmark_file

    kp = parse_keypoint_file((HERE / "keypoints.jsonl").read_bytes())[0]
    fv = parse_faup_file((HERE / "faup.csv").read_bytes())[0]
    lm = parse_landmark_file((HERE / "landmarks.csv").read_bytes())[0]
    save_png(out / "stick.png", render_stick_figure(kp, CANVAS).channels)
    save_png(out / "faup.png", render_faup_grid(fv, CANVAS).channels)
    save_png(out / "landmark.png", render_landmarks(lm, CANVAS).channels)


if __name__ == "__main__":
    main()
