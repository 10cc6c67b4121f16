"""Dataset augmentation: horizontal flip, crop jitter, and rescale blur.

Label transforms follow the same bottom-edge geometry as the labeler:
flipping mirrors both labels; shifting the crop window moves the
intersection point by the window offset (with the tan-corrected vertical
term); rescaling changes only appearance.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .dataset import DatasetError, LabeledDataset, LabeledSample
from .seeding import rng_for

SUPPORTED_OPS = ("flip", "crop_jitter", "scale")


def flip_sample(s: LabeledSample) -> LabeledSample:
    return replace(s, frame=s.frame[:, ::-1].copy(), d=-s.d, t=-s.t,
                   gt_d=None if s.gt_d is None else -s.gt_d,
                   gt_t=None if s.gt_t is None else -s.gt_t,
                   origin=f"{s.origin}+flip" if s.origin != "raw" else "flip")


def _shift_t(t: float, d: float, dx: int, dy: int, width: int) -> float:
    return t - (dx + dy * math.tan(d * math.pi / 2)) / (width / 2.0)


def crop_jitter_sample(s: LabeledSample, dx: int, dy: int) -> LabeledSample | None:
    """Shift the crop window by (dx, dy) pixels, edge-replicated.

    Returns None when the shifted bottom-edge intersection leaves (-1, 1).
    """
    h, w = s.frame.shape
    t = _shift_t(s.t, s.d, dx, dy, w)
    if not -1.0 < t < 1.0:
        return None
    ys = np.clip(np.arange(h) + dy, 0, h - 1)
    xs = np.clip(np.arange(w) + dx, 0, w - 1)
    frame = s.frame[np.ix_(ys, xs)]
    gt_t = s.gt_t
    if gt_t is not None and s.gt_d is not None:
        gt_t = _shift_t(gt_t, s.gt_d, dx, dy, w)
        if not -1.0 < gt_t < 1.0:
            gt_t = None
    return replace(s, frame=frame, t=t, gt_t=gt_t, origin="crop_jitter")


def scale_sample(s: LabeledSample, factor: int) -> LabeledSample:
    """Blur by downsampling with a block mean and growing back."""
    h, w = s.frame.shape
    if h % factor or w % factor:
        raise DatasetError(f"scale factor {factor} must divide {w}x{h}")
    small = s.frame.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
    frame = np.rint(np.repeat(np.repeat(small, factor, 0), factor, 1))
    return replace(s, frame=frame.astype(np.uint8), origin="scale")


def augment(dataset: LabeledDataset, ops, seed: int = 0,
            crop_frac: float = 0.1, scale_factors=(2, 4)) -> LabeledDataset:
    """Append one augmented copy per sample per op, with provenance flags."""
    ops = list(ops)
    unknown = set(ops) - set(SUPPORTED_OPS)
    if unknown:
        raise DatasetError(f"unsupported augmentation ops: {sorted(unknown)}")

    out = list(dataset.samples)
    dropped = 0
    base = dataset.samples
    for op in ops:
        rng = rng_for(seed, "augment", op)
        for s in base:
            if op == "flip":
                out.append(flip_sample(s))
            elif op == "crop_jitter":
                h, w = s.frame.shape
                dx = int(rng.integers(-round(crop_frac * w), round(crop_frac * w) + 1))
                dy = int(rng.integers(-round(crop_frac * h), round(crop_frac * h) + 1))
                jittered = crop_jitter_sample(s, dx, dy)
                if jittered is None:
                    dropped += 1
                else:
                    out.append(jittered)
            elif op == "scale":
                factor = int(scale_factors[int(rng.integers(len(scale_factors)))])
                out.append(scale_sample(s, factor))
    header = dict(dataset.header)
    header["augment"] = {"ops": ops, "seed": seed, "dropped": dropped}
    return LabeledDataset(samples=out, header=header, rejections=list(dataset.rejections))
