"""Training objectives as pure functions of tensors.

Adversarial terms take discriminator scores already squashed into (0, 1)
and clamp them by ``EPS`` before taking logs. The discriminator loss is the
negated conditional GAN objective; the generator uses the non-saturating
``-log D(fake)`` unless ``saturating=True``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch

EPS = 1e-7


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    lambda_l1: float = 10.0
    alpha_fm: float = 10.0
    beta_vgg: float = 10.0

    def __post_init__(self):
        for name in ("lambda_l1", "alpha_fm", "beta_vgg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        return {"lambda_l1": self.lambda_l1, "alpha_fm": self.alpha_fm, "beta_vgg": self.beta_vgg}


REPORT_KEYS = ("gan_g", "gan_d", "l1", "fm", "vgg", "total_g", "total_d")


@dataclass
class LossReport:
    """Named loss terms; ``total_g`` / ``total_d`` keep their graphs for backward."""

    gan_g: torch.Tensor
    gan_d: torch.Tensor
    l1: torch.Tensor
    fm: torch.Tensor
    vgg: torch.Tensor
    total_g: torch.Tensor
    total_d: torch.Tensor
    meta: dict = field(default_factory=dict)

    def scalars(self) -> dict:
        return {k: float(torch.as_tensor(getattr(self, k)).detach()) for k in REPORT_KEYS}

    def all_finite(self) -> bool:
        return all(torch.isfinite(torch.as_tensor(getattr(self, k))).all() for k in REPORT_KEYS)


def reduce_scales(terms, how: str):
    if len(terms) == 0:
        raise LossError("no per-scale terms to combine")
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    if how == "mean":
        return total / len(terms)
    if how == "sum":
        return total
    raise ValueError(f"unknown scale reduction {how!r}")


def adversarial_loss(d_real, d_fake, saturating: bool = False):
    """Return ``(loss_d, loss_g)`` for one discriminator scale."""
    if d_real.numel() == 0 or d_fake.numel() == 0:
        raise LossError("empty score map")
    real = d_real.clamp(EPS, 1 - EPS)
    fake = d_fake.clamp(EPS, 1 - EPS)
    loss_d = -torch.log(real).mean() - torch.log(1 - fake).mean()
    if saturating:
        loss_g = torch.log(1 - fake).mean()
    else:
        loss_g = -torch.log(fake).mean()
    return loss_d, loss_g


def multiscale_adversarial_loss(real_scores, fake_scores, saturating: bool = False, reduce: str = "mean"):
    if len(real_scores) != len(fake_scores):
        raise LossError(f"{len(real_scores)} real vs {len(fake_scores)} fake scales")
    parts = [adversarial_loss(r, f, saturating) for r, f in zip(real_scores, fake_scores)]
    return reduce_scales([p[0] for p in parts], reduce), reduce_scales([p[1] for p in parts], reduce)


def temporal_stack(frames, window_L: int):
    """Channel-concatenate the L+1 entries of a window, oldest first."""
    frames = list(frames)
    if len(frames) != window_L + 1:
        raise LossError(f"window of L={window_L} needs {window_L + 1} frames, got {len(frames)}")
    if len(frames) == 1:
        return frames[0]
    return torch.cat(frames, dim=1 if frames[0].dim() == 4 else 0)


def temporal_adversarial_loss(d_real, d_fake, window_L: int, n_frames: int, saturating: bool = False):
    """Adversarial loss on scores from the tuple-conditioned discriminator.

    ``n_frames`` is the number of frames the scored tuples were built from and
    must equal ``window_L + 1``.
    """
    if n_frames != window_L + 1:
        raise LossError(f"tuple of {n_frames} frames does not match window L={window_L}")
    return adversarial_loss(d_real, d_fake, saturating)


def l1_loss(a, b):
    if a.shape != b.shape:
        raise LossError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def feature_matching_loss(real_features, fake_features):
    """Mean over layers of the mean absolute activation gap; real side is detached."""
    if len(real_features) != len(fake_features) or not real_features:
        raise LossError(f"feature lists have lengths {len(real_features)} and {len(fake_features)}")
    per_layer = []
    for r, f in zip(real_features, fake_features):
        if r.shape != f.shape:
            raise LossError(f"feature shape mismatch {tuple(r.shape)} vs {tuple(f.shape)}")
        per_layer.append((f - r.detach()).abs().mean())
    return reduce_scales(per_layer, "mean")


def perceptual_loss(extractor, generated, target):
    if generated.shape != target.shape:
        raise LossError(f"shape mismatch {tuple(generated.shape)} vs {tuple(target.shape)}")
    fg = extractor(generated)
    with torch.no_grad():
        ft = extractor(target)
    return reduce_scales([(a - b).abs().mean() for a, b in zip(fg, ft)], "mean")


def combined_landmark_loss(gan_g, gan_d, g_out, target, w: LossWeights, reduce: str = "mean") -> LossReport:
    """Adversarial plus weighted L1 reconstruction for the landmark stage.

    ``gan_g`` / ``gan_d`` are either scalars or per-scale lists, which are
    combined with ``reduce``.
    """
    if isinstance(gan_g, (list, tuple)):
        gan_g = reduce_scales(list(gan_g), reduce)
    if isinstance(gan_d, (list, tuple)):
        gan_d = reduce_scales(list(gan_d), reduce)
    l1 = l1_loss(g_out, target)
    zero = torch.zeros((), dtype=l1.dtype)
    return LossReport(gan_g=gan_g, gan_d=gan_d, l1=l1, fm=zero, vgg=zero,
                      total_g=gan_g + w.lambda_l1 * l1, total_d=gan_d,
                      meta={"scale_reduce": reduce})


def full_video_objective(gan_g, gan_d, fm, vgg, w: LossWeights, window_L: int,
                         l1=None, reduce: str = "mean") -> LossReport:
    """Generator/discriminator totals for the temporal video stage.

    ``gan_g``, ``gan_d`` and ``fm`` are per-scale lists; ``vgg`` holds one
    perceptual term per window frame and is summed. ``l1`` is monitored only
    and never enters either total.
    """
    vgg = list(vgg)
    if len(vgg) != window_L + 1:
        raise LossError(f"expected {window_L + 1} perceptual terms, got {len(vgg)}")
    g = reduce_scales(list(gan_g), reduce)
    d = reduce_scales(list(gan_d), reduce)
    f = reduce_scales(list(fm), reduce)
    v = reduce_scales(vgg, "sum")
    if l1 is None:
        l1 = torch.zeros((), dtype=g.dtype)
    total_g = g + w.alpha_fm * f + w.beta_vgg * v
    return LossReport(gan_g=g, gan_d=d, l1=l1, fm=f, vgg=v, total_g=total_g, total_d=d,
                      meta={"scale_reduce": reduce, "window_L": window_L})
