"""Generator, multi-scale patch discriminators and the frozen feature pyramid.

Everything here is a desk-scale stand-in for the pix2pixHD backbone: the
generator downsamples twice, runs four residual blocks and upsamples twice;
each discriminator scale is four stride-2 convolutions and a score head.
"""
from __future__ import annotations

import hashlib
import json
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


class ShapeError(ValueError):
    pass


@contextmanager
def seeded(seed: int):
    """Run a block under a fixed torch seed without disturbing the global RNG."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


def set_deterministic(enabled: bool = True) -> None:
    torch.use_deterministic_algorithms(enabled)


class ResidualBlock(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(ch, ch, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(ch, affine=True),
            nn.ReLU(),
            nn.Conv2d(ch, ch, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(ch, affine=True),
        )

    def forward(self, x):
        return x + self.body(x)


class Generator(nn.Module):
    """Maps an ``in_channels`` x H x W stack to a 3 x H x W image in [0, 1]."""

    def __init__(self, in_channels: int, out_channels: int = 3, ngf: int = 16, n_res: int = 4):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels

        def stage(cin, cout, stride):
            return [nn.Conv2d(cin, cout, 3, stride=stride, padding=1, padding_mode="reflect"),
                    nn.InstanceNorm2d(cout, affine=True), nn.ReLU()]

        layers = stage(in_channels, ngf, 1)
        layers += stage(ngf, 2 * ngf, 2) + stage(2 * ngf, 4 * ngf, 2)
        layers += [ResidualBlock(4 * ngf) for _ in range(n_res)]
        for cin, cout in ((4 * ngf, 2 * ngf), (2 * ngf, ngf)):
            layers += [nn.Upsample(scale_factor=2, mode="nearest")] + stage(cin, cout, 1)
        layers += [nn.Conv2d(ngf, out_channels, 3, padding=1, padding_mode="reflect"), nn.Sigmoid()]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        if x.dim() == 3:
            x = x.unsqueeze(0)
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"generator expects {self.in_channels} input channels, got {x.shape[1]}")
        if x.shape[2] % 16 or x.shape[3] % 16:
            raise ShapeError(f"spatial size {tuple(x.shape[2:])} must be multiples of 16")
        return self.model(x)


class PatchDiscriminator(nn.Module):
    """Four stride-2 conv stages plus a 1-channel sigmoid score head."""

    def __init__(self, in_channels: int, ndf: int = 16, n_layers: int = 4):
        super().__init__()
        self.stages = nn.ModuleList()
        cin = in_channels
        for i in range(n_layers):
            cout = ndf * min(2 ** i, 8)
            self.stages.append(nn.Sequential(nn.Conv2d(cin, cout, 3, stride=2, padding=1),
                                             nn.LeakyReLU(0.2)))
            cin = cout
        self.head = nn.Conv2d(cin, 1, 3, padding=1)

    def forward(self, x):
        feats = []
        for s in self.stages:
            x = s(x)
            feats.append(x)
        return torch.sigmoid(self.head(x)), feats


class MultiscaleDiscriminator(nn.Module):
    """D_1..D_n; scale k sees its input average-pooled by 2^(k-1)."""

    def __init__(self, in_channels: int, ndf: int = 16, n_scales: int = 3):
        super().__init__()
        self.in_channels = in_channels
        self.scales = nn.ModuleList(PatchDiscriminator(in_channels, ndf) for _ in range(n_scales))

    @property
    def n_scales(self) -> int:
        return len(self.scales)

    def forward_scale(self, k: int, cond, img):
        if not 1 <= k <= self.n_scales:
            raise ValueError(f"scale k must be in 1..{self.n_scales}, got {k}")
        if cond.dim() == 3:
            cond = cond.unsqueeze(0)
        if img.dim() == 3:
            img = img.unsqueeze(0)
        if cond.shape[0] != img.shape[0] or cond.shape[2:] != img.shape[2:]:
            raise ShapeError(f"condition {tuple(cond.shape)} and image {tuple(img.shape)} differ spatially")
        x = torch.cat([cond, img], dim=1)
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"discriminator expects {self.in_channels} channels, got {x.shape[1]}")
        if k > 1:
            x = F.avg_pool2d(x, 2 ** (k - 1))
        return self.scales[k - 1](x)

    def forward(self, cond, img):
        return [self.forward_scale(k, cond, img) for k in range(1, self.n_scales + 1)]


def discriminator_forward(d: MultiscaleDiscriminator, k: int, cond, img):
    return d.forward_scale(k, cond, img)


def generator_forward(g: Generator, x):
    return g(x)


class FeatureExtractor(nn.Module):
    """Frozen convolutional pyramid used by the perceptual loss.

    Level 1 keeps full resolution; each further level halves it. Weights are
    seeded-random unless loaded from an ``.npz`` file.
    """

    def __init__(self, n_levels: int = 5, width: int = 16, seed: int = 0):
        super().__init__()
        self.levels = nn.ModuleList()
        with seeded(seed):
            cin = 3
            for i in range(n_levels):
                cout = width * min(2 ** i, 4)
                conv = nn.Conv2d(cin, cout, 3, stride=1 if i == 0 else 2, padding=1)
                self.levels.append(nn.Sequential(conv, nn.ReLU()))
                cin = cout
        self.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True):
        return super().train(False)

    def forward(self, img):
        if img.dim() == 3:
            img = img.unsqueeze(0)
        if img.shape[1] != 3:
            raise ShapeError(f"feature extractor expects 3 channels, got {img.shape[1]}")
        feats = []
        x = img
        for lvl in self.levels:
            x = lvl(x)
            feats.append(x)
        return feats

    @classmethod
    def from_file(cls, path, n_levels: int = 5, width: int = 16) -> "FeatureExtractor":
        """Load pretrained weights stored as ``levels.{i}.0.weight`` / ``.bias`` arrays."""
        fx = cls(n_levels, width)
        with np.load(path) as data:
            state = {k: torch.from_numpy(data[k]) for k in data.files}
        fx.load_state_dict(state)
        fx.requires_grad_(False)
        return fx


def extract_features(f: FeatureExtractor, img):
    return f(img)


# -- checkpoints -----------------------------------------------------------

def state_arrays(prefix: str, module: nn.Module) -> dict:
    return {f"{prefix}/{k}": v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def load_state_arrays(prefix: str, module: nn.Module, arrays: dict) -> None:
    sub = {k[len(prefix) + 1:]: torch.from_numpy(np.array(v)) for k, v in arrays.items()
           if k.startswith(prefix + "/")}
    module.load_state_dict(sub)


def arrays_checksum(arrays: dict) -> str:
    h = hashlib.sha256()
    for k in sorted(arrays):
        a = np.ascontiguousarray(arrays[k])
        h.update(k.encode())
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def module_checksum(module: nn.Module) -> str:
    return arrays_checksum(state_arrays("m", module))


class Checkpoint:
    """Named weight arrays plus a JSON metadata block.

    On disk this is an ``.npz`` archive: every weight is an array named
    ``<net>/<parameter>`` (``G``, ``D``, ``F``) and the metadata is stored as
    a JSON string under ``__meta__``.
    """

    def __init__(self, arrays: dict, meta: dict):
        self.arrays = arrays
        self.meta = meta

    @property
    def checksum(self) -> str:
        return arrays_checksum(self.arrays)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = dict(self.arrays)
        payload["__meta__"] = np.array(json.dumps(self.meta, sort_keys=True))
        with open(path, "wb") as fh:
            np.savez(fh, **payload)
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files if k != "__meta__"}
            meta = json.loads(str(data["__meta__"]))
        return cls(arrays, meta)
