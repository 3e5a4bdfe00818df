"""Global linear pose normalization between two people.

Source keypoints are mapped into the target's frame with a single isotropic
scale and an offset. The scale is the ratio of median shoulder widths and
the offset pins the source's median neck onto the target's median neck.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data_model import JOINT_INDEX, KeypointFrame

_REQUIRED = ("nose", "neck", "r_shoulder", "l_shoulder")


class StatisticsError(ValueError):
    pass


@dataclass(frozen=True)
class PoseStats:
    median_shoulder_width: float
    median_neck: tuple
    median_torso: float

    def __post_init__(self):
        if not (self.median_shoulder_width > 0 and np.isfinite(self.median_shoulder_width)):
            raise StatisticsError(f"shoulder width must be positive, got {self.median_shoulder_width}")
        if not (self.median_torso > 0 and np.isfinite(self.median_torso)):
            raise StatisticsError(f"torso length must be positive, got {self.median_torso}")
        object.__setattr__(self, "median_neck", (float(self.median_neck[0]), float(self.median_neck[1])))

    def to_dict(self) -> dict:
        return {"median_shoulder_width": self.median_shoulder_width,
                "median_neck": list(self.median_neck),
                "median_torso": self.median_torso}

    @classmethod
    def from_dict(cls, d: dict) -> "PoseStats":
        return cls(float(d["median_shoulder_width"]), tuple(d["median_neck"]), float(d["median_torso"]))


@dataclass(frozen=True)
class LinearTransform:
    scale: float
    offset: tuple

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be finite and positive, got {self.scale}")
        object.__setattr__(self, "offset", (float(self.offset[0]), float(self.offset[1])))

    @classmethod
    def identity(cls) -> "LinearTransform":
        return cls(1.0, (0.0, 0.0))

    def apply_points(self, xy: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(xy, dtype=np.float64) + np.asarray(self.offset)

    def to_dict(self) -> dict:
        return {"scale": self.scale, "offset": list(self.offset)}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearTransform":
        return cls(float(d["scale"]), tuple(d["offset"]))


def compute_pose_stats(seq) -> PoseStats:
    """Median body statistics over the frames that have every required joint.

    Shoulder width is the right-to-left shoulder distance, torso length the
    neck-to-nose distance.
    """
    idx = [JOINT_INDEX[n] for n in _REQUIRED]
    widths, necks, torsos = [], [], []
    for f in seq:
        if not np.all(f.joints[idx, 2] > 0):
            continue
        nose, neck = f.point("nose"), f.point("neck")
        widths.append(np.linalg.norm(f.point("r_shoulder") - f.point("l_shoulder")))
        torsos.append(np.linalg.norm(neck - nose))
        necks.append(neck)
    if not widths:
        raise StatisticsError("no frame has nose, neck and both shoulders present")
    necks = np.array(necks)
    return PoseStats(float(np.median(widths)),
                     (float(np.median(necks[:, 0])), float(np.median(necks[:, 1]))),
                     float(np.median(torsos)))


def fit_normalization(source: PoseStats, target: PoseStats) -> LinearTransform:
    if source == target:
        return LinearTransform.identity()
    s = target.median_shoulder_width / source.median_shoulder_width
    bx = target.median_neck[0] - s * source.median_neck[0]
    by = target.median_neck[1] - s * source.median_neck[1]
    return LinearTransform(s, (bx, by))


def apply_transform(t: LinearTransform, f: KeypointFrame) -> KeypointFrame:
    if t == LinearTransform.identity():
        return f
    joints = np.array(f.joints)
    present = joints[:, 2] > 0
    joints[present, :2] = t.apply_points(joints[present, :2])
    hands = None
    if f.hands is not None:
        hands = np.array(f.hands)
        hp = hands[:, 2] > 0
        hands[hp, :2] = t.apply_points(hands[hp, :2])
    return KeypointFrame(joints, hands)


def normalize_sequence(t: LinearTransform, seq) -> list:
    return [apply_transform(t, f) for f in seq]


def save_transform(t: LinearTransform, path, source: PoseStats = None, target: PoseStats = None):
    doc = {"transform": t.to_dict()}
    if source is not None:
        doc["source_stats"] = source.to_dict()
    if target is not None:
        doc["target_stats"] = target.to_dict()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
