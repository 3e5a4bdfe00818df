"""Procedural puppet clips with an exact FAUP -> landmark blendshape map.

A puppet identity fixes body proportions, a 68-point mean face and a linear
blend basis. Clips animate the arms and the FAUP scalars with seeded
sinusoids; the head stays put, so landmarks are a pure function of FAUP and
identity. Ground-truth frames draw the puppet with filled shapes, which
look nothing like the stick-figure conditioning.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from matplotlib.path import Path as MplPath

from .data_model import (FAUP_SIZE, JOINT_INDEX, N_ANGLES, N_AUS, N_JOINTS, N_LANDMARKS, AU_MAX,
                         AlignedClip, FaupVector, KeypointFrame, LandmarkSet, align_clip)
from .raster import BODY_EDGE_INDEX, CanvasSpec

# Face template in face units: x in [-1, 1] across, y in [-1, 1] down.
def _template_face() -> np.ndarray:
    pts = np.zeros((N_LANDMARKS, 2))
    t = np.linspace(0, 1, 17)
    a = math.pi * (1 - t)
    pts[0:17] = np.stack([np.cos(a), 0.95 * np.sin(a) - 0.05], axis=1)
    bx = np.linspace(-0.8, -0.2, 5)
    pts[17:22] = np.stack([bx, -0.55 - 0.08 * np.sin(np.linspace(0, math.pi, 5))], axis=1)
    pts[22:27] = np.stack([-bx[::-1], -0.55 - 0.08 * np.sin(np.linspace(0, math.pi, 5))], axis=1)
    pts[27:31] = np.stack([np.zeros(4), np.linspace(-0.4, 0.05, 4)], axis=1)
    pts[31:36] = np.stack([np.linspace(-0.25, 0.25, 5), [0.2, 0.23, 0.25, 0.23, 0.2]], axis=1)
    eye_ang = np.radians([180, 120, 60, 0, -60, -120])
    for start, cx in ((36, -0.45), (42, 0.45)):
        pts[start:start + 6] = np.stack([cx + 0.2 * np.cos(eye_ang), -0.3 - 0.09 * np.sin(eye_ang)], axis=1)
    outer = np.radians(180 - 30 * np.arange(12))
    pts[48:60] = np.stack([0.4 * np.cos(outer), 0.55 - 0.15 * np.sin(outer)], axis=1)
    inner = np.radians(180 - 45 * np.arange(8))
    pts[60:68] = np.stack([0.25 * np.cos(inner), 0.55 - 0.05 * np.sin(inner)], axis=1)
    return pts


TEMPLATE_FACE = _template_face()

_BROWS = list(range(17, 27))
_UPPER_LIDS = [37, 38, 43, 44]
_LOWER_LIDS = [40, 41, 46, 47]
_CORNERS = [48, 54, 60, 64]
_UPPER_LIP = list(range(49, 54)) + [61, 62, 63]
_LOWER_LIP = list(range(55, 60)) + [65, 66, 67]


def _template_basis() -> np.ndarray:
    """Per-unit landmark displacements (face units) for the 17 AUs and 3 angles."""
    B = np.zeros((N_LANDMARKS, 2, FAUP_SIZE))
    side = np.sign(TEMPLATE_FACE[:, 0])

    def dy(k, idx, v):
        B[idx, 1, k] += v

    def dx_out(k, idx, v):
        B[idx, 0, k] += v * side[idx]

    dy(0, [19, 20, 21, 22, 23, 24], -0.04)        # inner brow raiser
    dy(1, [17, 18, 25, 26], -0.04)                # outer brow raiser
    dy(2, _BROWS, 0.03); dx_out(2, [20, 21, 22, 23], -0.02)  # brow lowerer
    dy(3, _UPPER_LIDS, -0.02)                     # upper lid raiser
    dy(4, _LOWER_LIDS, -0.015)                    # cheek raiser
    dy(5, _UPPER_LIDS, 0.012); dy(5, _LOWER_LIDS, -0.012)   # lid tightener
    dy(6, list(range(31, 36)), -0.02)             # nose wrinkler
    dy(7, _UPPER_LIP, -0.02)                      # upper lip raiser
    dx_out(8, _CORNERS, 0.04); dy(8, _CORNERS, -0.02)       # lip corner puller
    dx_out(9, _CORNERS, 0.02)                     # dimpler
    dy(10, _CORNERS, 0.03)                        # lip corner depressor
    dy(11, list(range(6, 11)), -0.02); dy(11, _LOWER_LIP, -0.01)  # chin raiser
    dx_out(12, _CORNERS, 0.03)                    # lip stretcher
    dx_out(13, list(range(48, 68)), -0.015)       # lip tightener
    dy(14, [65, 66, 67], 0.03); dy(14, [61, 62, 63], -0.01)  # lips part
    dy(15, list(range(4, 13)), 0.03); dy(15, _LOWER_LIP, 0.05)  # jaw drop
    dy(16, _UPPER_LIDS, 0.03)                     # blink
    # angle columns, per radian
    B[27:36, 1, N_AUS + 0] += 0.2                 # pitch: nose drops
    B[27:36, 0, N_AUS + 1] += 0.3                 # yaw: nose swings sideways
    return B


TEMPLATE_BASIS = _template_basis()


@dataclass(frozen=True, eq=False)
class PuppetIdentity:
    seed: int
    neck: tuple
    neck_length: float
    shoulder_half_width: float
    upper_arm: float
    forearm: float
    eye_offset: tuple
    ear_offset: tuple
    face_half_size: tuple
    mean_shape: np.ndarray
    blend_basis: np.ndarray
    skin: tuple
    shirt: tuple
    background: tuple

    @property
    def face_center(self) -> np.ndarray:
        nose = self.rest_joints()[JOINT_INDEX["nose"], :2]
        return nose - np.array([0.0, 0.05 * self.face_half_size[1]])

    def rest_joints(self) -> np.ndarray:
        """Head and torso joints (arms hanging straight down) as a (12, 3) array."""
        j = np.zeros((N_JOINTS, 3))
        j[:, 2] = 1.0
        neck = np.array(self.neck)
        nose = neck - np.array([0.0, self.neck_length])
        ex, ey = self.eye_offset
        rx, ry = self.ear_offset
        put = {"neck": neck, "nose": nose,
               "r_eye": nose + (-ex, ey), "l_eye": nose + (ex, ey),
               "r_ear": nose + (-rx, ry), "l_ear": nose + (rx, ry)}
        for sgn, s in ((-1, "r"), (1, "l")):
            sh = neck + (sgn * self.shoulder_half_width, 1.0)
            put[f"{s}_shoulder"] = sh
            put[f"{s}_elbow"] = sh + (0.0, self.upper_arm)
            put[f"{s}_wrist"] = sh + (0.0, self.upper_arm + self.forearm)
        for name, p in put.items():
            j[JOINT_INDEX[name], :2] = p
        return j

    def bone_lengths(self) -> np.ndarray:
        j = self.rest_joints()
        return np.array([np.linalg.norm(j[a, :2] - j[b, :2]) for a, b in BODY_EDGE_INDEX])


def make_identity(seed: int, canvas: CanvasSpec = CanvasSpec()) -> PuppetIdentity:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    u = min(canvas.width, canvas.height) / 64.0
    neck = (canvas.width / 2 + rng.uniform(-3, 3) * u, 38 * u + rng.uniform(-2, 2) * u)
    fw, fh = rng.uniform(6.5, 8.0) * u, rng.uniform(8.0, 9.5) * u
    neck_length = rng.uniform(11.5, 13.5) * u
    nose = np.array(neck) - (0.0, neck_length)
    center = nose - (0.0, 0.05 * fh)
    mean_shape = center + TEMPLATE_FACE * (fw, fh) + rng.normal(0, 0.15 * u, (N_LANDMARKS, 2))
    gains = rng.uniform(0.6, 1.4, FAUP_SIZE)
    basis = TEMPLATE_BASIS * gains + rng.normal(0, 0.002, TEMPLATE_BASIS.shape) * (np.abs(TEMPLATE_BASIS) > 0)
    basis = basis * np.array([fw, fh])[None, :, None]
    skin = tuple(np.round(np.array([0.85, 0.65, 0.5]) * rng.uniform(0.7, 1.05) * 255) / 255)
    shirt = tuple(np.round(rng.uniform(0.15, 0.9, 3) * 255) / 255)
    return PuppetIdentity(
        seed=seed, neck=neck, neck_length=neck_length,
        shoulder_half_width=rng.uniform(8, 11.5) * u,
        upper_arm=rng.uniform(9, 11.5) * u, forearm=rng.uniform(8, 10.5) * u,
        eye_offset=(0.45 * fw, -0.35 * fh), ear_offset=(fw, -0.15 * fh),
        face_half_size=(fw, fh), mean_shape=mean_shape, blend_basis=basis,
        skin=skin, shirt=shirt, background=(0.1, 0.12, 0.16),
    )


def blendshape_landmarks(v: FaupVector, ident: PuppetIdentity) -> LandmarkSet:
    """Linear blendshape, then cos foreshortening (pitch, yaw) and in-plane roll.

    Both pose steps act about the centroid of the blended points.
    """
    pts = ident.mean_shape + ident.blend_basis @ v.flatten()
    if v.pitch == 0 and v.yaw == 0 and v.roll == 0:
        return LandmarkSet(pts)
    c = pts.mean(axis=0)
    rel = (pts - c) * np.array([math.cos(v.yaw), math.cos(v.pitch)])
    cr, sr = math.cos(v.roll), math.sin(v.roll)
    rot = np.array([[cr, -sr], [sr, cr]])
    return LandmarkSet(c + rel @ rot.T)


# -- motion ----------------------------------------------------------------

@dataclass(frozen=True)
class _Motion:
    au_base: np.ndarray
    au_amp: np.ndarray
    au_period: np.ndarray
    au_phase: np.ndarray
    ang_amp: np.ndarray
    ang_period: np.ndarray
    ang_phase: np.ndarray
    arm_base: np.ndarray     # (2, 2): [right, left] x [shoulder, elbow]
    arm_amp: np.ndarray
    arm_period: np.ndarray
    arm_phase: np.ndarray


def _motion(seed: int) -> _Motion:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    return _Motion(
        au_base=rng.uniform(1.0, 3.0, N_AUS), au_amp=rng.uniform(0.5, 2.5, N_AUS),
        au_period=rng.uniform(8, 24, N_AUS), au_phase=rng.uniform(0, 2 * math.pi, N_AUS),
        ang_amp=rng.uniform(0.05, 0.25, N_ANGLES), ang_period=rng.uniform(10, 30, N_ANGLES),
        ang_phase=rng.uniform(0, 2 * math.pi, N_ANGLES),
        arm_base=rng.uniform([0.3, 0.2], [0.8, 0.9], (2, 2)), arm_amp=rng.uniform(0.4, 0.8, (2, 2)),
        arm_period=rng.uniform(7, 12, (2, 2)), arm_phase=rng.uniform(0, 2 * math.pi, (2, 2)),
    )


def _faup_at(m: _Motion, n: int) -> FaupVector:
    au = np.clip(m.au_base + m.au_amp * np.sin(2 * math.pi * n / m.au_period + m.au_phase), 0.0, AU_MAX)
    ang = np.clip(m.ang_amp * np.sin(2 * math.pi * n / m.ang_period + m.ang_phase), -math.pi / 2, math.pi / 2)
    return FaupVector(au, ang)


def _keypoints_at(ident: PuppetIdentity, m: _Motion, n: int) -> KeypointFrame:
    j = ident.rest_joints()
    ang = m.arm_base + m.arm_amp * np.sin(2 * math.pi * n / m.arm_period + m.arm_phase)
    for side, (s, sgn) in enumerate((("r", -1), ("l", 1))):
        sh = j[JOINT_INDEX[f"{s}_shoulder"], :2]
        a1 = ang[side, 0]
        a2 = a1 + ang[side, 1]
        elbow = sh + ident.upper_arm * np.array([sgn * math.sin(a1), math.cos(a1)])
        wrist = elbow + ident.forearm * np.array([sgn * math.sin(a2), math.cos(a2)])
        j[JOINT_INDEX[f"{s}_elbow"], :2] = elbow
        j[JOINT_INDEX[f"{s}_wrist"], :2] = wrist
    return KeypointFrame(j)


# -- ground-truth rendering ------------------------------------------------

def _pixel_centers(h, w):
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(np.float64), ys.astype(np.float64)


def _fill(img, mask, color):
    for ch in range(3):
        img[ch][mask] = color[ch]


def _capsule(xs, ys, p0, p1, r):
    d = np.asarray(p1, float) - np.asarray(p0, float)
    qx, qy = xs - p0[0], ys - p0[1]
    len2 = float(d @ d)
    t = np.zeros_like(xs) if len2 == 0 else np.clip((qx * d[0] + qy * d[1]) / len2, 0, 1)
    ex, ey = qx - t * d[0], qy - t * d[1]
    return ex * ex + ey * ey <= r * r


def _polygon(xs, ys, pts):
    path = MplPath(np.asarray(pts))
    inside = path.contains_points(np.stack([xs.ravel(), ys.ravel()], axis=1))
    return inside.reshape(xs.shape)


def render_puppet_frame(ident: PuppetIdentity, kf: KeypointFrame, lm: LandmarkSet,
                        canvas: CanvasSpec) -> np.ndarray:
    """Filled-shape puppet render as a (3, H, W) float32 array on the 1/255 lattice."""
    h, w = canvas.height, canvas.width
    u = min(w, h) / 64.0
    xs, ys = _pixel_centers(h, w)
    img = np.empty((3, h, w))
    for ch in range(3):
        img[ch] = ident.background[ch]
    P = {name: kf.joints[i, :2] for name, i in JOINT_INDEX.items()}
    shirt = np.array(ident.shirt)
    skin = np.array(ident.skin)
    dark = np.array([0.12, 0.08, 0.06])

    torso = [P["r_shoulder"] + (-1.5 * u, 0), P["l_shoulder"] + (1.5 * u, 0),
             (P["l_shoulder"][0] + 2 * u, h + 1.0), (P["r_shoulder"][0] - 2 * u, h + 1.0)]
    _fill(img, _polygon(xs, ys, torso), shirt)
    _fill(img, _capsule(xs, ys, P["neck"], P["nose"] + (0, 3 * u), 2.5 * u), skin * 0.9)
    for s in ("r", "l"):
        _fill(img, _capsule(xs, ys, P[f"{s}_shoulder"], P[f"{s}_elbow"], 2.8 * u), shirt * 0.8)
        _fill(img, _capsule(xs, ys, P[f"{s}_elbow"], P[f"{s}_wrist"], 2.0 * u), skin)
        _fill(img, _capsule(xs, ys, P[f"{s}_wrist"], P[f"{s}_wrist"], 2.6 * u), skin * 0.95)

    c = ident.face_center
    fw, fh = ident.face_half_size
    head = ((xs - c[0]) / (1.15 * fw)) ** 2 + ((ys - c[1]) / (1.12 * fh)) ** 2 <= 1.0
    _fill(img, head, skin)
    hair = head & (ys < c[1] - 0.7 * fh)
    _fill(img, hair, dark * 1.5)

    pts = lm.points
    for a, b in zip(range(17, 21), range(18, 22)):
        _fill(img, _capsule(xs, ys, pts[a], pts[b], 0.6 * u), dark)
    for a, b in zip(range(22, 26), range(23, 27)):
        _fill(img, _capsule(xs, ys, pts[a], pts[b], 0.6 * u), dark)
    for a, b in zip(range(27, 30), range(28, 31)):
        _fill(img, _capsule(xs, ys, pts[a], pts[b], 0.5 * u), skin * 0.75)
    for sl in (slice(36, 42), slice(42, 48)):
        _fill(img, _polygon(xs, ys, pts[sl]) | _capsule(xs, ys, pts[sl].mean(0), pts[sl].mean(0), 0.6 * u),
              np.array([0.95, 0.95, 0.95]))
        _fill(img, _capsule(xs, ys, pts[sl].mean(0), pts[sl].mean(0), 0.5 * u), dark)
    _fill(img, _polygon(xs, ys, pts[48:60]) | _capsule(xs, ys, pts[48], pts[54], 0.5 * u),
          np.array([0.75, 0.25, 0.3]))
    _fill(img, _polygon(xs, ys, pts[60:68]), np.array([0.3, 0.05, 0.08]))
    return (np.round(np.clip(img, 0, 1) * 255) / 255).astype(np.float32)


def gen_puppet_clip(seed: int, n_frames: int, canvas: CanvasSpec = CanvasSpec(),
                    fps: float = 25.0, with_frames: bool = True) -> AlignedClip:
    """A deterministic puppet clip; frame n depends only on (seed, n, canvas)."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    ident = make_identity(seed, canvas)
    m = _motion(seed)
    faups = [_faup_at(m, n) for n in range(n_frames)]
    kps = [_keypoints_at(ident, m, n) for n in range(n_frames)]
    lms = [blendshape_landmarks(v, ident) for v in faups]
    frames = None
    if with_frames:
        frames = [render_puppet_frame(ident, k, l, canvas) for k, l in zip(kps, lms)]
    return align_clip(kps, faups, lms, frames, fps=fps, canvas=(canvas.width, canvas.height))
