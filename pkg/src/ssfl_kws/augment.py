"""Weak and strong augmentation of (n_mels, n_frames) feature matrices.

Stage names used in stage strings such as ``"basic,spec,mix"``:

``basic``
    circular time shift, linear-interpolation time stretch, additive noise
``spec``
    frequency and time masking
``rand``
    RandAugment over a small set of spectrogram-safe image ops
``mix``
    not a per-example stage; it switches on the mixup loss term
``none``
    identity

Every function takes an explicit ``numpy.random.Generator`` so concurrent
consumers never share a random stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

STAGES = ("basic", "spec", "rand", "mix", "none")
MAX_MAGNITUDE = 30


def roll_frames(x, shift):
    return np.roll(x, int(shift), axis=-1)


def time_stretch(x, factor):
    """Resample along frames so content lasts ``factor`` times longer.

    Output frame ``j`` reads the input at fractional position ``j / factor``
    by linear interpolation; positions past the last frame are zero.
    """
    n_frames = x.shape[-1]
    pos = np.arange(n_frames) / factor
    src = np.arange(n_frames)
    return np.stack([np.interp(pos, src, row, right=0.0) for row in x])


def basic_augment(x, shift_max, stretch_range, noise_sigma, rng):
    n_frames = x.shape[-1]
    lo, hi = stretch_range
    if not 0 <= shift_max < n_frames:
        raise DomainError(f"shift_max must lie in [0, {n_frames}), got {shift_max}")
    if not 0 < lo <= hi:
        raise DomainError(f"invalid stretch range {stretch_range}")
    out = x
    if shift_max > 0:
        out = roll_frames(out, rng.integers(-shift_max, shift_max + 1))
    if lo != 1.0 or hi != 1.0:
        out = time_stretch(out, rng.uniform(lo, hi))
    if noise_sigma > 0:
        out = out + rng.normal(0.0, noise_sigma, size=out.shape)
    return out.copy() if out is x else out


def spec_augment(x, n_freq_masks, f_max, n_time_masks, t_max, rng, return_masks=False):
    """Zero ``n_freq_masks`` mel bands and ``n_time_masks`` frame spans.

    Widths are uniform on ``[0, f_max]`` / ``[0, t_max]``.  With
    ``return_masks`` the drawn ``(axis, start, width)`` triples are returned
    too (axis 0 = mel, 1 = frame).
    """
    n_mels, n_frames = x.shape
    if not 0 <= f_max <= n_mels or not 0 <= t_max <= n_frames:
        raise DomainError(f"mask widths ({f_max}, {t_max}) exceed input shape {x.shape}")
    out = x.copy()
    masks = []
    for axis, count, width_max, size in ((0, n_freq_masks, f_max, n_mels), (1, n_time_masks, t_max, n_frames)):
        for _ in range(count):
            width = int(rng.integers(0, width_max + 1))
            start = int(rng.integers(0, size - width + 1))
            if axis == 0:
                out[start:start + width, :] = 0.0
            else:
                out[:, start:start + width] = 0.0
            masks.append((axis, start, width))
    return (out, masks) if return_masks else out


def translate(x, shift, axis):
    """Shift along ``axis`` filling vacated cells with zeros."""
    shift = int(shift)
    out = np.zeros_like(x)
    n = x.shape[axis]
    if abs(shift) >= n:
        return out
    src = [slice(None)] * 2
    dst = [slice(None)] * 2
    if shift >= 0:
        src[axis], dst[axis] = slice(0, n - shift), slice(shift, n)
    else:
        src[axis], dst[axis] = slice(-shift, n), slice(0, n + shift)
    out[tuple(dst)] = x[tuple(src)]
    return out


def brightness(x, offset):
    return x + offset


def contrast(x, factor):
    if factor == 1.0:
        return x.copy()
    mean = x.mean()
    return mean + factor * (x - mean)


def cutout(x, row, col, height, width):
    out = x.copy()
    out[row:row + height, col:col + width] = 0.0
    return out


def _rand_op(name, x, level, rng):
    """Apply one RandAugment op at ``level`` in [0, 1]."""
    n_mels, n_frames = x.shape
    sign = 1 if rng.random() < 0.5 else -1
    if name == "translate_x":
        return translate(x, sign * round(level * 0.3 * n_frames), axis=1)
    if name == "translate_y":
        return translate(x, sign * round(level * 0.3 * n_mels), axis=0)
    if name == "brightness":
        return brightness(x, sign * level * x.std())
    if name == "contrast":
        return contrast(x, 1.0 + sign * 0.9 * level)
    h = round(level * 0.5 * n_mels)
    w = round(level * 0.5 * n_frames)
    row = int(rng.integers(0, n_mels - h + 1))
    col = int(rng.integers(0, n_frames - w + 1))
    return cutout(x, row, col, h, w)


RAND_OPS = ("translate_x", "translate_y", "brightness", "contrast", "cutout")


def rand_augment_selected(x, n_ops, magnitude, rng):
    """RandAugment restricted to :data:`RAND_OPS`; magnitude 0 is identity."""
    if n_ops < 1:
        raise DomainError(f"n_ops must be at least 1, got {n_ops}")
    if not 0 <= magnitude <= MAX_MAGNITUDE:
        raise DomainError(f"magnitude must lie in [0, {MAX_MAGNITUDE}], got {magnitude}")
    level = magnitude / MAX_MAGNITUDE
    out = x.copy()
    for op in rng.choice(len(RAND_OPS), size=n_ops):
        out = _rand_op(RAND_OPS[op], out, level, rng)
    return out


def sample_mix_lambda(beta_param, rng):
    if not beta_param > 0:
        raise DomainError(f"beta_param must be positive, got {beta_param}")
    lam = float(rng.beta(beta_param, beta_param))
    return max(lam, 1.0 - lam)


def mixup(x1, x2, y1, y2, beta_param, rng, lam=None):
    """Convex combination biased towards the first argument.

    ``lam`` overrides the Beta draw (it is used as given, without folding).
    """
    x1, x2 = np.asarray(x1, dtype=np.float64), np.asarray(x2, dtype=np.float64)
    y1, y2 = np.asarray(y1, dtype=np.float64), np.asarray(y2, dtype=np.float64)
    if x1.shape != x2.shape or y1.shape != y2.shape:
        raise ShapeError(f"mixup shapes differ: {x1.shape}/{x2.shape}, {y1.shape}/{y2.shape}")
    if lam is None:
        lam = sample_mix_lambda(beta_param, rng)
    return lam * x1 + (1.0 - lam) * x2, lam * y1 + (1.0 - lam) * y2


@dataclass
class AugmentPipeline:
    """An ordered list of per-example stages with their parameters.

    Calling the pipeline on a batch ``(B, n_mels, n_frames)`` (or a single
    matrix) applies every stage to every example with the given generator.
    """

    stages: list = field(default_factory=list)
    mix: bool = False
    beta_param: float = 0.75

    def __call__(self, x, rng):
        x = np.asarray(x, dtype=np.float64)
        if not self.stages:
            return x
        if x.ndim == 2:
            return self._one(x, rng)
        return np.stack([self._one(xi, rng) for xi in x])

    def _one(self, x, rng):
        for name, kw in self.stages:
            if name == "basic":
                x = basic_augment(x, rng=rng, **kw)
            elif name == "spec":
                x = spec_augment(x, rng=rng, **kw)
            elif name == "rand":
                x = rand_augment_selected(x, rng=rng, **kw)
        return x

    @property
    def is_identity(self):
        return not self.stages

    @classmethod
    def from_string(cls, text, n_mels, n_frames, beta_param=0.75):
        """Build a pipeline from a comma-separated stage string with default parameters."""
        names = [s.strip().lower() for s in str(text).split(",") if s.strip()]
        stages = []
        mix = False
        for name in names:
            if name not in STAGES:
                raise ConfigError(f"unknown augmentation stage {name!r} (expected one of: {', '.join(STAGES)})")
            if name == "mix":
                mix = True
            elif name != "none":
                stages.append((name, default_stage_params(name, n_mels, n_frames)))
        return cls(stages, mix, beta_param)


def default_stage_params(name, n_mels, n_frames):
    if name == "basic":
        return {"shift_max": n_frames // 10, "stretch_range": (0.9, 1.1), "noise_sigma": 0.05}
    if name == "spec":
        return {"n_freq_masks": 2, "f_max": n_mels // 4, "n_time_masks": 2, "t_max": n_frames // 8}
    if name == "rand":
        return {"n_ops": 2, "magnitude": 10}
    raise ConfigError(f"stage {name!r} has no per-example parameters")


def weak_default(n_mels, n_frames):
    return AugmentPipeline.from_string("basic", n_mels, n_frames)


def strong_default(n_mels, n_frames):
    return AugmentPipeline.from_string("basic,spec,mix", n_mels, n_frames)
