"""Synthetic keyword-like spectrograms.

Each class is a fixed time-frequency ridge: a Gaussian bump over mel bins
whose centre drifts linearly in time with a class-specific slope and
wobbles sinusoidally.  Examples are the class template plus i.i.d.
Gaussian noise.  Values are rounded to float32 so they survive the binary
file format unchanged.
"""

import numpy as np

from ..errors import ConfigError
from .dataset import Dataset

RIDGE_HEIGHT = 4.0
N_SLOPES = 4


def class_templates(n_classes, n_mels, n_frames, variant=0):
    """Noise-free class templates, shape (n_classes, n_mels, n_frames).

    ``variant`` shifts the ridge phases to give a related but distinct
    domain (used for transfer experiments).
    """
    mel = np.arange(n_mels)[:, None]
    t = np.arange(n_frames)[None, :]
    n_bands = int(np.ceil(n_classes / N_SLOPES))
    width = max(1.0, n_mels / 16)
    out = np.empty((n_classes, n_mels, n_frames))
    for c in range(n_classes):
        slope = ((c % N_SLOPES) - (N_SLOPES - 1) / 2) * 0.5 * n_mels / n_frames
        base = ((c // N_SLOPES) + 0.5) / n_bands * n_mels
        omega = 1 + c % 3
        phase = 0.7 * c + 0.9 * variant
        centre = base + slope * (t - (n_frames - 1) / 2)
        centre = np.mod(centre + 0.15 * n_mels * np.sin(2 * np.pi * omega * t / n_frames + phase), n_mels)
        dist = np.abs(mel - centre)
        dist = np.minimum(dist, n_mels - dist)
        out[c] = RIDGE_HEIGHT * np.exp(-(dist ** 2) / (2 * width ** 2))
    return out


def gen_synthetic(n_per_class, n_classes, n_mels, n_frames, noise_sigma=0.1, seed=0, variant=0):
    """``n_per_class * n_classes`` labeled examples, class-major order."""
    if min(n_per_class, n_mels, n_frames) < 1:
        raise ConfigError("n_per_class, n_mels and n_frames must be positive")
    if n_classes < 2:
        raise ConfigError(f"n_classes must be at least 2, got {n_classes}")
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be non-negative, got {noise_sigma}")
    templates = class_templates(n_classes, n_mels, n_frames, variant)
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    noise = rng.standard_normal((labels.size, n_mels, n_frames)) * noise_sigma
    features = (templates[labels] + noise).astype(np.float32).astype(np.float64)
    return Dataset(features, labels, n_classes)
