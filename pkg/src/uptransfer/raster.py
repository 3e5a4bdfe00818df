"""Integer, non-antialiased rasterization of conditioning images.

All pixel tests are done in exact integer arithmetic on rounded
coordinates, so renders are bit-identical on every platform. Pixel (r, c)
has its center at x = c, y = r.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data_model import JOINT_INDEX, N_AUS, AU_MAX, FaupVector, KeypointFrame, LandmarkSet

KIND_CHANNELS = {"faup_grid": 1, "stick": 3, "landmark": 1, "ubkp_fl": 4}

BODY_EDGES = (
    ("neck", "nose"),
    ("neck", "r_shoulder"), ("r_shoulder", "r_elbow"), ("r_elbow", "r_wrist"),
    ("neck", "l_shoulder"), ("l_shoulder", "l_elbow"), ("l_elbow", "l_wrist"),
    ("nose", "r_eye"), ("r_eye", "r_ear"),
    ("nose", "l_eye"), ("l_eye", "l_ear"),
)
BODY_EDGE_INDEX = tuple((JOINT_INDEX[a], JOINT_INDEX[b]) for a, b in BODY_EDGES)

# One RGB color per body edge, 8-bit exact.
EDGE_PALETTE = (
    (255, 0, 0),
    (255, 85, 0), (255, 170, 0), (255, 255, 0),
    (0, 255, 0), (0, 255, 170), (0, 170, 255),
    (0, 85, 255), (85, 0, 255),
    (170, 0, 255), (255, 0, 170),
)
JOINT_COLOR = (255, 255, 255)

# 21-point hand tree: wrist, then five 4-joint fingers.
HAND_EDGES = tuple((0 if j % 4 == 1 else j - 1, j) for j in range(1, 21))
HAND_COLORS = ((255, 128, 128), (128, 128, 255))  # right, left

LANDMARK_CONTOURS = (
    (range(0, 17), False),   # jaw
    (range(17, 22), False),  # right brow
    (range(22, 27), False),  # left brow
    (range(27, 31), False),  # nose bridge
    (range(31, 36), False),  # nostrils
    (range(36, 42), True),   # right eye
    (range(42, 48), True),   # left eye
    (range(48, 60), True),   # outer lip
    (range(60, 68), True),   # inner lip
)

FAUP_GRID_ROWS, FAUP_GRID_COLS = 4, 5


class CompositionError(ValueError):
    pass


@dataclass(frozen=True)
class CanvasSpec:
    width: int = 64
    height: int = 64
    line_width: int = 1
    point_radius: int = 1

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.width % 16 or self.height % 16:
            raise ValueError(f"canvas {self.width}x{self.height} must be positive multiples of 16")
        if self.line_width < 1 or self.point_radius < 1:
            raise ValueError("line_width and point_radius must be >= 1")

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height,
                "line_width": self.line_width, "point_radius": self.point_radius}


@dataclass(frozen=True, eq=False)
class ConditioningImage:
    channels: np.ndarray
    kind: str

    def __post_init__(self):
        arr = np.asarray(self.channels, dtype=np.float32)
        if self.kind not in KIND_CHANNELS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if arr.ndim != 3 or arr.shape[0] != KIND_CHANNELS[self.kind]:
            raise ValueError(f"{self.kind} image needs {KIND_CHANNELS[self.kind]} channels, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() > 1):
            raise ValueError("pixel values must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "channels", arr)

    @property
    def height(self) -> int:
        return self.channels.shape[1]

    @property
    def width(self) -> int:
        return self.channels.shape[2]

    def __eq__(self, other):
        if not isinstance(other, ConditioningImage):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.channels, other.channels)

    __hash__ = None


def _round(v: float) -> int:
    return int(math.floor(v + 0.5))


def _grid(c: CanvasSpec):
    ys, xs = np.mgrid[0:c.height, 0:c.width]
    return xs.astype(np.int64), ys.astype(np.int64)


def disc_mask(c: CanvasSpec, x: float, y: float, radius: int) -> np.ndarray:
    cx, cy = _round(x), _round(y)
    xs, ys = _grid(c)
    return (xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius


def segment_mask(c: CanvasSpec, p0, p1, width: int) -> np.ndarray:
    """Pixels whose center lies within width/2 of the rounded segment."""
    x0, y0, x1, y1 = _round(p0[0]), _round(p0[1]), _round(p1[0]), _round(p1[1])
    xs, ys = _grid(c)
    dx, dy = x1 - x0, y1 - y0
    qx, qy = xs - x0, ys - y0
    w2 = width * width
    if dx == 0 and dy == 0:
        return 4 * (qx * qx + qy * qy) <= w2
    dot = qx * dx + qy * dy
    len2 = dx * dx + dy * dy
    cross = qx * dy - qy * dx
    inside = (dot >= 0) & (dot <= len2)
    near_line = 4 * cross * cross <= w2 * len2
    near_p0 = 4 * (qx * qx + qy * qy) <= w2
    rx, ry = xs - x1, ys - y1
    near_p1 = 4 * (rx * rx + ry * ry) <= w2
    return (inside & near_line) | near_p0 | near_p1


def _paint(img: np.ndarray, mask: np.ndarray, color) -> None:
    for ch, v in enumerate(color):
        img[ch][mask] = v / 255.0


def render_stick_figure(f: KeypointFrame, c: CanvasSpec) -> ConditioningImage:
    """Color-coded skeleton: one palette color per bone, white joint discs."""
    img = np.zeros((3, c.height, c.width), dtype=np.float32)
    conf = f.joints[:, 2]
    for (a, b), color in zip(BODY_EDGE_INDEX, EDGE_PALETTE):
        if conf[a] > 0 and conf[b] > 0:
            _paint(img, segment_mask(c, f.joints[a, :2], f.joints[b, :2], c.line_width), color)
    if f.hands is not None:
        for h, color in enumerate(HAND_COLORS):
            pts = f.hands[21 * h:21 * (h + 1)]
            for a, b in HAND_EDGES:
                if pts[a, 2] > 0 and pts[b, 2] > 0:
                    _paint(img, segment_mask(c, pts[a, :2], pts[b, :2], c.line_width), color)
    for j in range(len(conf)):
        if conf[j] > 0:
            _paint(img, disc_mask(c, f.joints[j, 0], f.joints[j, 1], c.point_radius), JOINT_COLOR)
    return ConditioningImage(img, "stick")


def normalize_faup(v: FaupVector) -> np.ndarray:
    """The 20 FAUP scalars mapped to [0, 1]: AUs / 5, angles affinely from [-pi/2, pi/2]."""
    au = np.asarray(v.au_intensities) / AU_MAX
    ang = (np.asarray(v.pose_angles) + math.pi / 2) / math.pi
    return np.clip(np.concatenate([au, ang]), 0.0, 1.0)


def faup_block_origin(c: CanvasSpec):
    """(x0, y0, side) of the centered 4x5 block grid."""
    side = min(c.width, c.height) // 16
    x0 = (c.width - FAUP_GRID_COLS * side) // 2
    y0 = (c.height - FAUP_GRID_ROWS * side) // 2
    return x0, y0, side


def faup_block_slice(c: CanvasSpec, k: int):
    x0, y0, side = faup_block_origin(c)
    r, col = divmod(k, FAUP_GRID_COLS)
    return slice(y0 + r * side, y0 + (r + 1) * side), slice(x0 + col * side, x0 + (col + 1) * side)


def render_faup_grid(v: FaupVector, c: CanvasSpec) -> ConditioningImage:
    vals = normalize_faup(v)
    img = np.zeros((1, c.height, c.width), dtype=np.float32)
    for k, val in enumerate(vals):
        ys, xs = faup_block_slice(c, k)
        img[0, ys, xs] = val
    return ConditioningImage(img, "faup_grid")


def render_landmarks(lm: LandmarkSet, c: CanvasSpec) -> ConditioningImage:
    mask = np.zeros((c.height, c.width), dtype=bool)
    pts = lm.points
    for idx, closed in LANDMARK_CONTOURS:
        idx = list(idx)
        pairs = list(zip(idx[:-1], idx[1:]))
        if closed:
            pairs.append((idx[-1], idx[0]))
        for a, b in pairs:
            mask |= segment_mask(c, pts[a], pts[b], c.line_width)
    for x, y in pts:
        mask |= disc_mask(c, x, y, c.point_radius)
    return ConditioningImage(mask[None].astype(np.float32), "landmark")


def compose_ubkp_fl(stick: ConditioningImage, lm: ConditioningImage,
                    mode: str = "stack") -> ConditioningImage:
    """Combine a stick figure and a landmark image into the 4-channel input.

    ``mode="stack"`` concatenates channels (stick RGB, then landmarks).
    ``mode="overlay"`` paints landmarks white over the stick figure in the
    first three channels and leaves the fourth at zero.
    """
    if stick.kind != "stick" or lm.kind != "landmark":
        raise CompositionError(f"expected (stick, landmark), got ({stick.kind}, {lm.kind})")
    if stick.channels.shape[1:] != lm.channels.shape[1:]:
        raise CompositionError(f"spatial size mismatch: {stick.channels.shape[1:]} vs {lm.channels.shape[1:]}")
    if mode == "stack":
        out = np.concatenate([stick.channels, lm.channels], axis=0)
    elif mode == "overlay":
        rgb = np.maximum(stick.channels, lm.channels)
        out = np.concatenate([rgb, np.zeros_like(lm.channels)], axis=0)
    else:
        raise ValueError(f"unknown composition mode {mode!r}")
    return ConditioningImage(out, "ubkp_fl")


def render_overlay(stick: ConditioningImage, lm: ConditioningImage) -> np.ndarray:
    """RGB debug view with landmarks drawn over the stick figure."""
    return compose_ubkp_fl(stick, lm, mode="overlay").channels[:3]


def landmark_image_from_rgb(rgb: np.ndarray) -> ConditioningImage:
    """Collapse a 3-channel generator output into a landmark image (channel mean)."""
    arr = np.clip(np.asarray(rgb, dtype=np.float32).mean(axis=0, keepdims=True), 0.0, 1.0)
    return ConditioningImage(arr, "landmark")


def au_block_values(img: ConditioningImage, c: CanvasSpec) -> np.ndarray:
    """Read back the 20 block values of a FAUP grid image."""
    out = np.empty(N_AUS + 3)
    for k in range(len(out)):
        ys, xs = faup_block_slice(c, k)
        out[k] = img.channels[0, ys, xs][0, 0]
    return out
