"""Landmark-stage and video-stage training, the temporal window, and transfer.

Both stages alternate one discriminator step and one generator step per
iteration with Adam. In the video stage a window of L+1 consecutive frames
is rolled out sequentially: each frame sees its own conditioning image and
the previous generated frame, and the first frame of a window sees the
zero image instead.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import losses as L
from .data_model import AlignedClip
from .nets import (Checkpoint, FeatureExtractor, Generator, MultiscaleDiscriminator, load_state_arrays,
                   module_checksum, seeded, set_deterministic, state_arrays)
from .pose_norm import PoseStats, apply_transform, fit_normalization
from .raster import (CanvasSpec, compose_ubkp_fl, landmark_image_from_rgb, render_faup_grid,
                     render_landmarks, render_stick_figure)

log = logging.getLogger(__name__)

UBKP_FL_CHANNELS = 4
FRAME_CHANNELS = 3


class ConfigError(ValueError):
    pass


class WindowError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, report: dict):
        self.iteration = iteration
        self.report = report
        super().__init__(f"non-finite loss at iteration {iteration}: {report}")


class TransferError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    stage: str = "landmark"
    window_L: int = 0
    loss_weights: L.LossWeights = field(default_factory=L.LossWeights)
    iterations: int = 500
    batch_size: int = 4
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    betas: tuple = (0.5, 0.999)
    seed: int = 0
    canvas: CanvasSpec = field(default_factory=CanvasSpec)
    checkpoint_interval: int = 0
    ngf: int = 16
    ndf: int = 16
    n_scales: int = 3
    extractor_seed: int = 1234
    extractor_weights: Optional[str] = None
    compose_mode: str = "stack"
    saturating_g: bool = False
    scale_reduce: str = "mean"
    deterministic: bool = True

    def __post_init__(self):
        if self.stage not in ("landmark", "video"):
            raise ConfigError(f"stage must be 'landmark' or 'video', got {self.stage!r}")
        if self.window_L < 0:
            raise ConfigError("window_L must be >= 0")
        if self.stage == "landmark" and self.window_L != 0:
            raise ConfigError("the landmark stage has no temporal window (window_L must be 0)")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ConfigError("learning rates must be positive")
        if self.iterations < 0 or self.batch_size < 1:
            raise ConfigError("iterations must be >= 0 and batch_size >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "loss_weights" in d:
            d["loss_weights"] = L.LossWeights(**d["loss_weights"])
        if "canvas" in d:
            d["canvas"] = CanvasSpec(**d["canvas"])
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainConfig":
        with open(path) as fh:
            d = json.load(fh)
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(d)


# -- temporal window -------------------------------------------------------

ZERO = "zero"


@dataclass
class WindowInput:
    """Inputs for one (L+1)-frame window ending at frame ``t``.

    ``conditioning`` holds x_{t-L..t}. ``priors[j]`` is the previous-frame
    input of window position j for j < L; the last position always chains on
    the output just before it. An entry of None means "use the previous
    output of this same rollout". ``prior_sources`` names the frame index
    each prior stands for, or ZERO.
    """

    t: int
    window_L: int
    conditioning: list
    priors: list
    indices: list
    prior_sources: list

    @property
    def boot_prior(self):
        return self.priors[0] if self.priors else None


def zero_image(like: torch.Tensor) -> torch.Tensor:
    shape = (FRAME_CHANNELS,) + tuple(like.shape[-2:])
    if like.dim() == 4:
        shape = (like.shape[0],) + shape
    return torch.zeros(shape, dtype=like.dtype)


def build_window(t: int, window_L: int, cond_seq, generated_cache: Optional[dict] = None) -> WindowInput:
    """Assemble the window ending at ``t``.

    Without a cache the window is self-contained: it boots from z and the
    later priors are left for ``rollout_window`` to chain. With a cache the
    caller is rolling a sequence forward, so every prior must already be
    there (the one before frame 0 is z) and a miss is a bookkeeping bug.
    """
    if t < window_L or t >= len(cond_seq):
        raise WindowError(f"frame {t} cannot end a window of L={window_L} over {len(cond_seq)} frames")
    idx = list(range(t - window_L, t + 1))
    priors, sources = [], []
    for j in range(window_L):
        prev = idx[j] - 1
        if prev < 0 or (generated_cache is None and j == 0):
            priors.append(zero_image(cond_seq[t]))
            sources.append(ZERO)
        elif generated_cache is None:
            priors.append(None)
            sources.append(prev)
        elif prev in generated_cache:
            priors.append(generated_cache[prev])
            sources.append(prev)
        else:
            raise RuntimeError(f"generated frame {prev} missing from cache; rollout must be sequential")
    return WindowInput(t, window_L, [cond_seq[i] for i in idx], priors, idx, sources)


def generator_input(cond: torch.Tensor, prior: Optional[torch.Tensor]) -> torch.Tensor:
    if prior is None:
        return cond
    return torch.cat([cond, prior], dim=1 if cond.dim() == 4 else 0)


def rollout_window(g: Generator, w: WindowInput) -> list:
    """Generate every frame of the window in order, chaining priors."""
    if w.window_L == 0:
        return [g(w.conditioning[0])]
    outs = []
    for j, x in enumerate(w.conditioning):
        prior = w.priors[j] if j < w.window_L and w.priors[j] is not None else outs[-1]
        outs.append(g(generator_input(x, prior)))
    return outs


def video_generator_channels(window_L: int) -> int:
    return UBKP_FL_CHANNELS + (FRAME_CHANNELS if window_L > 0 else 0)


def video_discriminator_channels(window_L: int) -> int:
    return (UBKP_FL_CHANNELS + FRAME_CHANNELS) * (window_L + 1)


# -- shared machinery ------------------------------------------------------

def discriminator_loss(d: MultiscaleDiscriminator, cond, real, fake, saturating=False, reduce="mean"):
    """Discriminator total over all scales, with the fake branch detached."""
    gan_d = []
    for k in range(1, d.n_scales + 1):
        s_real, _ = d.forward_scale(k, cond, real)
        s_fake, _ = d.forward_scale(k, cond, fake.detach())
        gan_d.append(L.adversarial_loss(s_real, s_fake, saturating)[0])
    return L.reduce_scales(gan_d, reduce), gan_d


def generator_adversarial_terms(d: MultiscaleDiscriminator, cond, real, fake, saturating=False):
    """Per-scale generator adversarial and feature-matching terms."""
    gan_g, fm = [], []
    for k in range(1, d.n_scales + 1):
        s_fake, f_fake = d.forward_scale(k, cond, fake)
        with torch.no_grad():
            s_real, f_real = d.forward_scale(k, cond, real)
        gan_g.append(L.adversarial_loss(s_real, s_fake, saturating)[1])
        fm.append(L.feature_matching_loss(f_real, f_fake))
    return gan_g, fm


def landmark_objective(g: Generator, d: MultiscaleDiscriminator, x, y, w: L.LossWeights,
                       saturating=False, reduce="mean") -> L.LossReport:
    """Both landmark-stage totals at the current weights (no optimizer step)."""
    fake = g(x)
    _, gan_d = discriminator_loss(d, x, y, fake, saturating, reduce)
    gan_g, _ = generator_adversarial_terms(d, x, y, fake, saturating)
    return L.combined_landmark_loss(gan_g, gan_d, fake, y, w, reduce)


def video_objective(g: Generator, d: MultiscaleDiscriminator, fx: FeatureExtractor, cond_seq, real_seq,
                    w: L.LossWeights, window_L: int, saturating=False, reduce="mean") -> L.LossReport:
    """Both video-stage totals for one window at the current weights.

    ``cond_seq`` / ``real_seq`` hold the L+1 conditioning images and frames
    of the window, oldest first.
    """
    win = build_window(window_L, window_L, cond_seq)
    fakes = rollout_window(g, win)
    cond = L.temporal_stack(win.conditioning, window_L)
    real = L.temporal_stack(real_seq, window_L)
    fake = L.temporal_stack(fakes, window_L)
    _, gan_d = discriminator_loss(d, cond, real, fake, saturating, reduce)
    gan_g, fm = generator_adversarial_terms(d, cond, real, fake, saturating)
    vgg = [L.perceptual_loss(fx, f, r) for f, r in zip(fakes, real_seq)]
    return L.full_video_objective(gan_g, gan_d, fm, vgg, w, window_L, l1=L.l1_loss(fake.detach(), real),
                                  reduce=reduce)


class _GanState:
    def __init__(self, cfg: TrainConfig, g_in: int, d_in: int, dtype=torch.float32):
        self.cfg = cfg
        with seeded(cfg.seed):
            self.G = Generator(g_in, 3, cfg.ngf).to(dtype)
            self.D = MultiscaleDiscriminator(d_in, cfg.ndf, cfg.n_scales).to(dtype)
        if cfg.extractor_weights:
            self.F = FeatureExtractor.from_file(cfg.extractor_weights).to(dtype)
        else:
            self.F = FeatureExtractor(seed=cfg.extractor_seed).to(dtype)
        self.opt_g = torch.optim.Adam(self.G.parameters(), lr=cfg.lr_g, betas=tuple(cfg.betas))
        self.opt_d = torch.optim.Adam(self.D.parameters(), lr=cfg.lr_d, betas=tuple(cfg.betas))
        self.sampler = torch.Generator().manual_seed(cfg.seed + 1)

    def d_step(self, cond, real, fake):
        self.opt_d.zero_grad(set_to_none=True)
        total_d, gan_d = discriminator_loss(self.D, cond, real, fake, self.cfg.saturating_g,
                                            self.cfg.scale_reduce)
        total_d.backward()
        self.opt_d.step()
        return [x.detach() for x in gan_d]

    def g_terms(self, cond, real, fake):
        return generator_adversarial_terms(self.D, cond, real, fake, self.cfg.saturating_g)

    def g_step(self, total_g):
        self.opt_g.zero_grad(set_to_none=True)
        total_g.backward()
        self.opt_g.step()

    def sample(self, n: int) -> list:
        return torch.randint(0, n, (self.cfg.batch_size,), generator=self.sampler).tolist()

    def checkpoint(self, iteration: int, extra: Optional[dict] = None) -> Checkpoint:
        arrays = {}
        arrays.update(state_arrays("G", self.G))
        arrays.update(state_arrays("D", self.D))
        arrays.update(state_arrays("F", self.F))
        meta = {
            "stage": self.cfg.stage,
            "iteration": iteration,
            "seed": self.cfg.seed,
            "window_L": self.cfg.window_L,
            "lambda_l1": self.cfg.loss_weights.lambda_l1,
            "alpha_fm": self.cfg.loss_weights.alpha_fm,
            "beta_vgg": self.cfg.loss_weights.beta_vgg,
            "config": self.cfg.to_dict(),
            "architecture": {
                "generator": {"in_channels": self.G.in_channels, "out_channels": 3, "ngf": self.cfg.ngf,
                              "down": 2, "residual_blocks": 4, "up": 2},
                "discriminator": {"in_channels": self.D.in_channels, "ndf": self.cfg.ndf,
                                  "n_scales": self.D.n_scales, "stages": 4},
                "extractor": {"levels": len(self.F.levels), "checksum": module_checksum(self.F)},
            },
        }
        if extra:
            meta.update(extra)
        return Checkpoint(arrays, meta)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list
    extractor_checksum_before: str = ""
    extractor_checksum_after: str = ""


def _finish_iteration(state, it, report: L.LossReport, log_rows, out_dir, log_fh):
    row = {"iteration": it, **report.scalars()}
    if not all(math.isfinite(v) for k, v in row.items() if k != "iteration"):
        raise TrainingDiverged(it, row)
    log_rows.append(row)
    if log_fh is not None:
        log_fh.write(json.dumps(row) + "\n")
    interval = state.cfg.checkpoint_interval
    if out_dir is not None and interval and (it + 1) % interval == 0:
        state.checkpoint(it + 1).save(Path(out_dir) / f"ckpt_{it + 1:06d}.npz")


def _open_log(out_dir):
    if out_dir is None:
        return None
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return open(out_dir / "train_log.jsonl", "w")


def _stack(arrays, dtype=torch.float32) -> torch.Tensor:
    return torch.from_numpy(np.stack([np.asarray(a, dtype=np.float32) for a in arrays])).to(dtype)


# -- landmark stage --------------------------------------------------------

def landmark_pair_tensors(pairs, canvas: CanvasSpec, dtype=torch.float32):
    """FAUP grid inputs (N,1,H,W) and 3-channel landmark targets (N,3,H,W)."""
    xs = [render_faup_grid(v, canvas).channels for v, _ in pairs]
    ys = [np.repeat(render_landmarks(lm, canvas).channels, 3, axis=0) for _, lm in pairs]
    return _stack(xs, dtype), _stack(ys, dtype)


def train_landmark_stage(cfg: TrainConfig, pairs, out_dir=None) -> TrainResult:
    """Fit G: FAUP grid -> landmark image with adversarial + lambda * L1."""
    if cfg.stage != "landmark":
        raise ConfigError("train_landmark_stage needs stage='landmark'")
    pairs = list(pairs)
    if not pairs:
        raise ValueError("landmark dataset is empty")
    set_deterministic(cfg.deterministic)
    X, Y = landmark_pair_tensors(pairs, cfg.canvas)
    state = _GanState(cfg, g_in=1, d_in=1 + 3)
    fx_before = module_checksum(state.F)
    rows = []
    fh = _open_log(out_dir)
    try:
        for it in range(cfg.iterations):
            idx = state.sample(len(pairs))
            x, y = X[idx], Y[idx]
            fake = state.G(x)
            gan_d = state.d_step(x, y, fake)
            gan_g, _ = state.g_terms(x, y, fake)
            report = L.combined_landmark_loss(gan_g, gan_d, fake, y, cfg.loss_weights, cfg.scale_reduce)
            state.g_step(report.total_g)
            _finish_iteration(state, it, report, rows, out_dir, fh)
    finally:
        if fh is not None:
            fh.close()
    ckpt = state.checkpoint(cfg.iterations, {"n_pairs": len(pairs)})
    if out_dir is not None:
        ckpt.save(Path(out_dir) / "final.npz")
    return TrainResult(ckpt, rows, fx_before, module_checksum(state.F))


# -- video stage -----------------------------------------------------------

def clip_conditioning(clip: AlignedClip, canvas: CanvasSpec, mode: str = "stack") -> list:
    """UBKP-FL images for every frame of a clip, from its own keypoints and landmarks."""
    return [compose_ubkp_fl(render_stick_figure(k, canvas), render_landmarks(lm, canvas), mode).channels
            for k, lm in zip(clip.keypoints, clip.landmarks)]


def _clip_tensors(clips, cfg):
    data = []
    for clip in clips:
        if not clip.has_frames:
            raise ValueError("video training needs ground-truth frames")
        if len(clip) < cfg.window_L + 1:
            raise WindowError(f"clip of {len(clip)} frames is shorter than a window of L={cfg.window_L}")
        if tuple(clip.canvas) != (cfg.canvas.width, cfg.canvas.height):
            raise ConfigError(f"clip canvas {clip.canvas} differs from config canvas")
        xs = _stack(clip_conditioning(clip, cfg.canvas, cfg.compose_mode))
        ys = _stack(clip.frames)
        data.append((xs, ys))
    return data


def _valid_windows(data, window_L):
    return [(c, t) for c, (xs, _) in enumerate(data) for t in range(window_L, len(xs))]


def train_video_stage(cfg: TrainConfig, clips, out_dir=None) -> TrainResult:
    """Temporal video GAN: windowed rollout, tuple discriminator, FM and perceptual terms."""
    if cfg.stage != "video":
        raise ConfigError("train_video_stage needs stage='video'")
    clips = list(clips)
    if not clips:
        raise ValueError("video dataset is empty")
    set_deterministic(cfg.deterministic)
    Lw = cfg.window_L
    data = _clip_tensors(clips, cfg)
    windows = _valid_windows(data, Lw)
    state = _GanState(cfg, video_generator_channels(Lw), video_discriminator_channels(Lw))
    fx_before = module_checksum(state.F)
    rows = []
    fh = _open_log(out_dir)
    try:
        for it in range(cfg.iterations):
            picks = [windows[i] for i in state.sample(len(windows))]
            cond_seq = [torch.stack([data[c][0][t - Lw + j] for c, t in picks]) for j in range(Lw + 1)]
            real_seq = [torch.stack([data[c][1][t - Lw + j] for c, t in picks]) for j in range(Lw + 1)]
            w = build_window(Lw, Lw, cond_seq)
            fakes = rollout_window(state.G, w)
            cond = L.temporal_stack(w.conditioning, Lw)
            real = L.temporal_stack(real_seq, Lw)
            fake = L.temporal_stack(fakes, Lw)
            gan_d = state.d_step(cond, real, fake)
            gan_g, fm = state.g_terms(cond, real, fake)
            vgg = [L.perceptual_loss(state.F, f, r) for f, r in zip(fakes, real_seq)]
            l1 = L.l1_loss(fake.detach(), real)
            report = L.full_video_objective(gan_g, gan_d, fm, vgg, cfg.loss_weights, Lw, l1=l1,
                                            reduce=cfg.scale_reduce)
            state.g_step(report.total_g)
            _finish_iteration(state, it, report, rows, out_dir, fh)
    finally:
        if fh is not None:
            fh.close()
    ckpt = state.checkpoint(cfg.iterations, {"n_clips": len(clips)})
    if out_dir is not None:
        ckpt.save(Path(out_dir) / "final.npz")
    return TrainResult(ckpt, rows, fx_before, module_checksum(state.F))


def train_single_frame(cfg: TrainConfig, clips) -> TrainResult:
    """Plain per-frame conditional GAN with FM and perceptual terms.

    No window machinery; used as the reference that the video stage must
    reproduce exactly at L = 0.
    """
    set_deterministic(cfg.deterministic)
    data = [(_stack(clip_conditioning(c, cfg.canvas, cfg.compose_mode)), _stack(c.frames)) for c in clips]
    frames = [(c, t) for c, (xs, _) in enumerate(data) for t in range(len(xs))]
    state = _GanState(cfg, UBKP_FL_CHANNELS, UBKP_FL_CHANNELS + FRAME_CHANNELS)
    rows = []
    for it in range(cfg.iterations):
        picks = [frames[i] for i in state.sample(len(frames))]
        x = torch.stack([data[c][0][t] for c, t in picks])
        y = torch.stack([data[c][1][t] for c, t in picks])
        fake = state.G(x)
        gan_d = state.d_step(x, y, fake)
        gan_g, fm = state.g_terms(x, y, fake)
        vgg = [L.perceptual_loss(state.F, fake, y)]
        report = L.full_video_objective(gan_g, gan_d, fm, vgg, cfg.loss_weights, 0,
                                        l1=L.l1_loss(fake.detach(), y), reduce=cfg.scale_reduce)
        state.g_step(report.total_g)
        _finish_iteration(state, it, report, rows, None, None)
    return TrainResult(state.checkpoint(cfg.iterations), rows)


# -- loading and inference -------------------------------------------------

def load_generator(ckpt: Checkpoint, dtype=torch.float32) -> Generator:
    arch = ckpt.meta["architecture"]["generator"]
    g = Generator(arch["in_channels"], arch["out_channels"], arch["ngf"]).to(dtype)
    load_state_arrays("G", g, ckpt.arrays)
    g.eval()
    return g


def load_discriminator(ckpt: Checkpoint, dtype=torch.float32) -> MultiscaleDiscriminator:
    arch = ckpt.meta["architecture"]["discriminator"]
    d = MultiscaleDiscriminator(arch["in_channels"], arch["ndf"], arch["n_scales"]).to(dtype)
    load_state_arrays("D", d, ckpt.arrays)
    return d


def checkpoint_canvas(ckpt: Checkpoint) -> CanvasSpec:
    return CanvasSpec(**ckpt.meta["config"]["canvas"])


@torch.no_grad()
def generate_landmark_images(g: Generator, faups, canvas: CanvasSpec) -> list:
    out = []
    for v in faups:
        x = torch.from_numpy(render_faup_grid(v, canvas).channels[None].copy())
        rgb = g(x)[0].numpy()
        out.append(landmark_image_from_rgb(rgb))
    return out


@torch.no_grad()
def generate_video(g: Generator, conditioning, window_L: int) -> list:
    """Sequential synthesis over a whole sequence; frame 0 is booted from the zero image."""
    cond = [torch.from_numpy(np.asarray(c, dtype=np.float32)[None].copy()) for c in conditioning]
    frames = []
    prev = None
    for t, x in enumerate(cond):
        if window_L > 0 and prev is None:
            prev = zero_image(x)
        out = g(generator_input(x, prev if window_L > 0 else None))
        frames.append(out[0].numpy())
        prev = out
    return frames


@dataclass
class TransferResult:
    frames: list
    conditioning: list
    normalized_keypoints: list
    landmark_images: list
    transform: object


def transfer(source: AlignedClip, landmark_ckpt: Checkpoint, video_ckpt: Checkpoint,
             target_stats: PoseStats, source_stats: PoseStats,
             compose_mode: Optional[str] = None) -> TransferResult:
    """Drive the target's generators with a source clip.

    Per frame: normalize keypoints into the target frame, render the stick
    figure, synthesize landmarks from FAUP, compose UBKP-FL and run the
    video generator with sequential priors.
    """
    lc, vc = checkpoint_canvas(landmark_ckpt), checkpoint_canvas(video_ckpt)
    if lc != vc:
        raise TransferError(f"checkpoint canvases differ: landmark {lc} vs video {vc}")
    if landmark_ckpt.meta.get("stage") != "landmark" or video_ckpt.meta.get("stage") != "video":
        raise TransferError("expected a landmark-stage and a video-stage checkpoint")
    if tuple(source.canvas) != (vc.width, vc.height):
        raise TransferError(f"source canvas {source.canvas} differs from checkpoint canvas")
    mode = compose_mode or video_ckpt.meta["config"].get("compose_mode", "stack")
    window_L = int(video_ckpt.meta["window_L"])
    t = fit_normalization(source_stats, target_stats)
    kps = [apply_transform(t, k) for k in source.keypoints]
    lm_imgs = generate_landmark_images(load_generator(landmark_ckpt), source.faups, lc)
    cond = [compose_ubkp_fl(render_stick_figure(k, vc), lm, mode).channels for k, lm in zip(kps, lm_imgs)]
    frames = generate_video(load_generator(video_ckpt), cond, window_L)
    return TransferResult(frames, cond, kps, lm_imgs, t)
