"""Reconstruction and temporal-coherence metrics for generated sequences."""
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


class MetricsError(ValueError):
    pass


PSNR_INF = math.inf


@dataclass
class MetricsReport:
    """Sequence-level metrics plus their per-frame series.

    ``flicker_ratio`` is the mean absolute frame-to-frame change of the
    generated sequence divided by that of the ground truth; 1 means the
    output moves exactly as much as the reference does. PSNR is +inf for
    a perfect reconstruction and is serialized as the string "inf".
    """

    mean_l1: float
    psnr: float
    flicker_ratio: float
    l1_series: list = field(default_factory=list)
    psnr_series: list = field(default_factory=list)
    flicker_series: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**{k: _unjson(v) for k, v in d.items()})

    def violations(self, max_l1=None, min_psnr=None, flicker_range=None) -> list:
        """Human-readable messages for every threshold this report misses."""
        out = []
        if max_l1 is not None and not self.mean_l1 < max_l1:
            out.append(f"mean_l1 {self.mean_l1:.6f} >= {max_l1}")
        if min_psnr is not None and not self.psnr >= min_psnr:
            out.append(f"psnr {self.psnr:.3f} < {min_psnr}")
        if flicker_range is not None:
            lo, hi = flicker_range
            if not lo <= self.flicker_ratio <= hi:
                out.append(f"flicker_ratio {self.flicker_ratio:.4f} outside [{lo}, {hi}]")
        return out


def _jsonable(v):
    if isinstance(v, list):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _unjson(v):
    if isinstance(v, list):
        return [_unjson(x) for x in v]
    if v in ("inf", "-inf"):
        return float(v)
    return v


def psnr_from_mse(mse: float, peak: float = 1.0) -> float:
    if mse == 0:
        return PSNR_INF
    return float(10.0 * math.log10(peak * peak / mse))


def _as_stack(frames, name):
    try:
        arr = np.stack([np.asarray(f, dtype=np.float64) for f in frames])
    except ValueError as e:
        raise MetricsError(f"{name} frames differ in shape") from e
    return arr


def evaluate(generated, ground_truth) -> MetricsReport:
    gen = _as_stack(generated, "generated")
    gt = _as_stack(ground_truth, "ground-truth")
    if len(gen) != len(gt):
        raise MetricsError(f"length mismatch: {len(gen)} generated vs {len(gt)} ground-truth frames")
    if gen.shape != gt.shape:
        raise MetricsError(f"shape mismatch: {gen.shape[1:]} vs {gt.shape[1:]}")
    if len(gen) < 2:
        raise MetricsError("flicker is undefined for sequences shorter than 2 frames")

    axes = tuple(range(1, gen.ndim))
    err = gen - gt
    l1_series = np.abs(err).mean(axis=axes)
    mse_series = (err ** 2).mean(axis=axes)
    d_gen = np.abs(np.diff(gen, axis=0))
    d_gt = np.abs(np.diff(gt, axis=0))
    flicker_series = [_ratio(a, b) for a, b in zip(d_gen.mean(axis=axes), d_gt.mean(axis=axes))]
    return MetricsReport(
        mean_l1=float(l1_series.mean()),
        psnr=psnr_from_mse(float(mse_series.mean())),
        flicker_ratio=_ratio(d_gen.mean(), d_gt.mean()),
        l1_series=[float(v) for v in l1_series],
        psnr_series=[psnr_from_mse(float(v)) for v in mse_series],
        flicker_series=flicker_series,
    )


def _ratio(num, den) -> float:
    # A static reference with a static output counts as perfectly coherent.
    if den == 0:
        return 1.0 if num == 0 else math.inf
    return float(num / den)
