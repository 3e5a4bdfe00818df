"""Sequence data types and file ingestion.

Keypoints are read from JSON-lines, FAUP vectors and landmarks from CSV.
Every container freezes its arrays on construction so instances can be
shared freely.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

JOINT_NAMES = (
    "nose", "neck",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_eye", "l_eye", "r_ear", "l_ear",
)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}
N_JOINTS = len(JOINT_NAMES)
N_HAND_POINTS = 42  # 2 hands x 21

N_AUS = 17
N_ANGLES = 3
FAUP_SIZE = N_AUS + N_ANGLES
AU_MAX = 5.0
FAUP_COLUMNS = tuple(f"au{i:02d}" for i in range(1, N_AUS + 1)) + ("pitch", "yaw", "roll")

N_LANDMARKS = 68
LANDMARK_COLUMNS = tuple(c for i in range(N_LANDMARKS) for c in (f"x{i}", f"y{i}"))


class DataError(ValueError):
    """Base class for ingestion failures."""


class ParseError(DataError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[str] = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class SchemaError(ParseError):
    pass


class AlignmentError(DataError):
    def __init__(self, lengths: dict):
        self.lengths = dict(lengths)
        listing = ", ".join(f"{k}={v}" for k, v in lengths.items())
        super().__init__(f"sequence lengths differ: ({listing})")


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class KeypointFrame:
    """Upper-body joints for one frame.

    ``joints`` is a (12, 3) array of (x, y, confidence) rows in
    :data:`JOINT_NAMES` order. A confidence of 0 marks a missing joint.
    ``hands`` is either None or a (42, 3) array, right hand first.
    """

    joints: np.ndarray
    hands: Optional[np.ndarray] = None

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64)
        if joints.shape != (N_JOINTS, 3):
            raise SchemaError(f"expected {N_JOINTS} joints of (x, y, c), got shape {joints.shape}")
        joints = joints.copy()
        joints[:, 2] = np.clip(joints[:, 2], 0.0, 1.0)
        present = joints[:, 2] > 0
        if not np.all(np.isfinite(joints[present, :2])):
            raise SchemaError("non-finite coordinate on a present joint")
        object.__setattr__(self, "joints", _frozen(joints))
        if self.hands is not None:
            hands = np.asarray(self.hands, dtype=np.float64)
            if hands.shape != (N_HAND_POINTS, 3):
                raise SchemaError(f"expected {N_HAND_POINTS} hand points, got shape {hands.shape}")
            hands = hands.copy()
            hands[:, 2] = np.clip(hands[:, 2], 0.0, 1.0)
            object.__setattr__(self, "hands", _frozen(hands))

    @property
    def xy(self) -> np.ndarray:
        return self.joints[:, :2]

    @property
    def confidence(self) -> np.ndarray:
        return self.joints[:, 2]

    def present(self, name: str) -> bool:
        return bool(self.joints[JOINT_INDEX[name], 2] > 0)

    def point(self, name: str) -> np.ndarray:
        return self.joints[JOINT_INDEX[name], :2]

    def __eq__(self, other):
        if not isinstance(other, KeypointFrame):
            return NotImplemented
        if (self.hands is None) != (other.hands is None):
            return False
        same_hands = self.hands is None or np.array_equal(self.hands, other.hands)
        return np.array_equal(self.joints, other.joints) and same_hands

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FaupVector:
    """17 AU intensities in [0, 5] followed by (pitch, yaw, roll) in radians."""

    au_intensities: np.ndarray
    pose_angles: np.ndarray

    def __post_init__(self):
        au = np.asarray(self.au_intensities, dtype=np.float64)
        ang = np.asarray(self.pose_angles, dtype=np.float64)
        if au.shape != (N_AUS,):
            raise SchemaError(f"expected {N_AUS} AU intensities, got shape {au.shape}")
        if ang.shape != (N_ANGLES,):
            raise SchemaError(f"expected {N_ANGLES} pose angles, got shape {ang.shape}")
        if not (np.all(np.isfinite(au)) and np.all(np.isfinite(ang))):
            raise SchemaError("FAUP values must be finite")
        object.__setattr__(self, "au_intensities", _frozen(np.clip(au, 0.0, AU_MAX)))
        object.__setattr__(self, "pose_angles", _frozen(ang))

    @classmethod
    def from_flat(cls, values: Sequence[float]) -> "FaupVector":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (FAUP_SIZE,):
            raise SchemaError(f"expected {FAUP_SIZE} FAUP scalars, got shape {values.shape}")
        return cls(values[:N_AUS], values[N_AUS:])

    @classmethod
    def zeros(cls) -> "FaupVector":
        return cls(np.zeros(N_AUS), np.zeros(N_ANGLES))

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.au_intensities, self.pose_angles])

    @property
    def pitch(self) -> float:
        return float(self.pose_angles[0])

    @property
    def yaw(self) -> float:
        return float(self.pose_angles[1])

    @property
    def roll(self) -> float:
        return float(self.pose_angles[2])

    def __eq__(self, other):
        if not isinstance(other, FaupVector):
            return NotImplemented
        return np.array_equal(self.flatten(), other.flatten())

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    """68 facial landmarks as a (68, 2) array of pixel coordinates."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (N_LANDMARKS, 2):
            raise SchemaError(f"expected {N_LANDMARKS} landmark points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise SchemaError("landmark coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts))

    def __eq__(self, other):
        if not isinstance(other, LandmarkSet):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    __hash__ = None


@dataclass(frozen=True)
class AlignedClip:
    keypoints: tuple
    faups: tuple
    landmarks: tuple
    frames: Optional[tuple] = None
    fps: float = 25.0
    canvas: tuple = (64, 64)

    def __post_init__(self):
        w, h = self.canvas
        if w <= 0 or h <= 0 or w % 16 or h % 16:
            raise DataError(f"canvas {self.canvas} must be positive multiples of 16")
        if self.fps <= 0:
            raise DataError("fps must be positive")
        if len(self) < 1:
            raise DataError("clip must contain at least one frame")
        if self.frames is not None:
            for fr in self.frames:
                fr.flags.writeable = False

    def __len__(self):
        return len(self.keypoints)

    @property
    def has_frames(self) -> bool:
        return self.frames is not None


def align_clip(keypoints, faups, landmarks, frames=None, fps: float = 25.0,
               canvas: tuple = (64, 64)) -> AlignedClip:
    """Bundle equally long sequences into a clip; no resampling is done.

    ``frames`` are (3, H, W) float arrays in [0, 1] when given.
    """
    lengths = {"keypoints": len(keypoints), "faups": len(faups), "landmarks": len(landmarks)}
    if frames is not None:
        lengths["frames"] = len(frames)
    if len(set(lengths.values())) != 1:
        raise AlignmentError(lengths)
    if frames is not None:
        frames = tuple(np.array(f, dtype=np.float32) for f in frames)
        h, w = canvas[1], canvas[0]
        for f in frames:
            if f.shape != (3, h, w):
                raise DataError(f"frame shape {f.shape} does not match canvas (3, {h}, {w})")
    return AlignedClip(tuple(keypoints), tuple(faups), tuple(landmarks), frames, fps, tuple(canvas))


def _as_text(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        return data.decode("utf-8")
    return data


# -- keypoints -------------------------------------------------------------

def parse_keypoint_file(data) -> list:
    frames = []
    for lineno, line in enumerate(_as_text(data).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", line=lineno) from None
        if not isinstance(rec, dict) or "joints" not in rec:
            raise SchemaError("record must be an object with a 'joints' field", line=lineno)
        joints = rec["joints"]
        if not isinstance(joints, list) or len(joints) != N_JOINTS:
            n = len(joints) if isinstance(joints, list) else "non-list"
            raise SchemaError(f"expected {N_JOINTS} joints, got {n}", line=lineno)
        hands = rec.get("hands")
        if hands is not None and (not isinstance(hands, list) or len(hands) != N_HAND_POINTS):
            raise SchemaError(f"expected {N_HAND_POINTS} hand points", line=lineno)
        try:
            j = np.array(joints, dtype=np.float64)
            hd = None if hands is None else np.array(hands, dtype=np.float64)
        except (TypeError, ValueError):
            raise ParseError("non-numeric joint entry", line=lineno) from None
        try:
            frames.append(KeypointFrame(j, hd))
        except SchemaError as exc:
            raise SchemaError(str(exc), line=lineno) from None
    return frames


def serialize_keypoints(frames) -> bytes:
    lines = []
    for f in frames:
        rec = {"joints": f.joints.tolist()}
        if f.hands is not None:
            rec["hands"] = f.hands.tolist()
        lines.append(json.dumps(rec))
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- FAUP ------------------------------------------------------------------

def _parse_numeric_csv(data, columns, kind):
    reader = csv.reader(io.StringIO(_as_text(data)))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"empty {kind} file", line=1) from None
    header = [h.strip() for h in header]
    expected = ["frame", *columns]
    if len(header) != len(expected):
        raise SchemaError(f"header has {len(header)} columns, expected {len(expected)}", line=1)
    if header != expected:
        raise SchemaError(f"unexpected header, expected {','.join(expected)}", line=1)
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(expected):
            raise SchemaError(f"row has {len(row)} columns, expected {len(expected)}", line=lineno)
        values = []
        for name, cell in zip(columns, row[1:]):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r}", line=lineno, column=name) from None
            if not math.isfinite(v):
                raise ParseError("non-finite cell", line=lineno, column=name)
            values.append(v)
        rows.append(values)
    return rows


def parse_faup_file(data) -> list:
    rows = _parse_numeric_csv(data, FAUP_COLUMNS, "FAUP")
    return [FaupVector.from_flat(r) for r in rows]


def serialize_faups(faups) -> bytes:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["frame", *FAUP_COLUMNS])
    for i, v in enumerate(faups):
        w.writerow([i, *(repr(float(x)) for x in v.flatten())])
    return out.getvalue().encode("utf-8")


# -- landmarks -------------------------------------------------------------

def parse_landmark_file(data) -> list:
    rows = _parse_numeric_csv(data, LANDMARK_COLUMNS, "landmark")
    return [LandmarkSet(np.array(r).reshape(N_LANDMARKS, 2)) for r in rows]


def serialize_landmarks(landmarks) -> bytes:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["frame", *LANDMARK_COLUMNS])
    for i, lm in enumerate(landmarks):
        w.writerow([i, *(repr(float(x)) for x in lm.points.reshape(-1))])
    return out.getvalue().encode("utf-8")


# -- frames ----------------------------------------------------------------

def save_png(path, image: np.ndarray) -> None:
    """Write a (C, H, W) [0, 1] image as PNG, quantized by round(v * 255).

    C = 1 gives grayscale, 3 RGB, 4 RGBA.
    """
    from PIL import Image

    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    q = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    mode = {1: "L", 3: "RGB", 4: "RGBA"}[q.shape[0]]
    pixels = q[0] if q.shape[0] == 1 else np.transpose(q, (1, 2, 0))
    Image.fromarray(pixels, mode=mode).save(path)


def load_png(path) -> np.ndarray:
    """Read a PNG back into a (C, H, W) float32 array in [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = np.transpose(arr, (2, 0, 1))
    return arr.astype(np.float32) / 255.0


def frame_path(directory, index: int) -> Path:
    return Path(directory) / f"frame_{index:05d}.png"


def load_frames(directory) -> list:
    paths = sorted(Path(directory).glob("frame_*.png"))
    return [load_png(p)[:3] for p in paths]


def load_clip(directory, fps: float = 25.0) -> AlignedClip:
    """Load a clip directory as written by ``gen-fixtures``.

    Expects ``keypoints.jsonl``, ``faup.csv``, ``landmarks.csv`` and
    optionally ``frames/frame_NNNNN.png``; the canvas comes from the frames,
    or from ``clip.json`` when there are none.
    """
    directory = Path(directory)
    kps = parse_keypoint_file((directory / "keypoints.jsonl").read_bytes())
    faups = parse_faup_file((directory / "faup.csv").read_bytes())
    lms = parse_landmark_file((directory / "landmarks.csv").read_bytes())
    meta = {}
    if (directory / "clip.json").exists():
        meta = json.loads((directory / "clip.json").read_text())
    frames = None
    if (directory / "frames").is_dir():
        frames = load_frames(directory / "frames") or None
    if frames:
        canvas = (frames[0].shape[2], frames[0].shape[1])
    else:
        canvas = tuple(meta.get("canvas", (64, 64)))
    return align_clip(kps, faups, lms, frames, fps=meta.get("fps", fps), canvas=canvas)


def save_clip(clip: AlignedClip, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "keypoints.jsonl").write_bytes(serialize_keypoints(clip.keypoints))
    (directory / "faup.csv").write_bytes(serialize_faups(clip.faups))
    (directory / "landmarks.csv").write_bytes(serialize_landmarks(clip.landmarks))
    (directory / "clip.json").write_text(json.dumps({"fps": clip.fps, "canvas": list(clip.canvas),
                                                     "n_frames": len(clip)}))
    if clip.frames is not None:
        (directory / "frames").mkdir(exist_ok=True)
        for i, fr in enumerate(clip.frames):
            save_png(frame_path(directory / "frames", i), fr)
