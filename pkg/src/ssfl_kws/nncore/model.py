"""Scaled-down temporal-convolution residual classifier (TC-ResNet family).

Mel bins are the input channels and convolutions slide over frames.  The
network is a kernel-3 stem, one residual block per entry of
``block_channels`` (each block halves the frame axis), global average
pooling over frames and a dense head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from . import autograd as ag
from .autograd import Tensor
from .params import ParamSet

STEM_KERNEL = 3


@dataclass(frozen=True)
class ModelSpec:
    n_mels: int
    n_frames: int
    n_classes: int
    block_channels: tuple = (16, 24, 32)
    kernel_size: int = 9
    use_batchnorm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "block_channels", tuple(int(c) for c in self.block_channels))
        self.validate()

    def validate(self):
        if self.n_mels < 1 or self.n_frames < 1:
            raise ConfigError(f"n_mels and n_frames must be positive, got {self.n_mels}x{self.n_frames}")
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be at least 2, got {self.n_classes}")
        if not self.block_channels:
            raise ConfigError("block_channels must be non-empty")
        if any(c < 1 for c in self.block_channels):
            raise ConfigError(f"block_channels must be positive, got {self.block_channels}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be a positive odd integer, got {self.kernel_size}")


def _layout(spec):
    """Yield (name, shape, kind) for every trainable tensor in build order."""
    layers = []

    def conv(prefix, c_out, c_in, k):
        layers.append((f"{prefix}.weight", (c_out, c_in, k), "conv"))
        if spec.use_batchnorm:
            layers.append((f"{prefix}.bn.gamma", (c_out,), "one"))
            layers.append((f"{prefix}.bn.beta", (c_out,), "zero"))
        else:
            layers.append((f"{prefix}.bias", (c_out,), "zero"))

    c_prev = spec.block_channels[0]
    conv("stem", c_prev, spec.n_mels, STEM_KERNEL)
    for i, c in enumerate(spec.block_channels):
        conv(f"block{i}.conv1", c, c_prev, spec.kernel_size)
        conv(f"block{i}.conv2", c, c, spec.kernel_size)
        conv(f"block{i}.shortcut", c, c_prev, 1)
        c_prev = c
    layers.append(("head.weight", (spec.n_classes, c_prev), "dense"))
    layers.append(("head.bias", (spec.n_classes,), "zero"))
    return layers


def build_model(spec, seed):
    """Fresh parameters: He fan-in normal weights, zero biases, unit BN scale."""
    spec.validate()
    rng = np.random.default_rng(seed)
    tensors = {}
    buffers = {}
    for name, shape, kind in _layout(spec):
        if kind in ("conv", "dense"):
            fan_in = int(np.prod(shape[1:]))
            data = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        elif kind == "one":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        tensors[name] = Tensor(data, requires_grad=True)
        if name.endswith(".bn.gamma"):
            prefix = name[: -len(".gamma")]
            buffers[f"{prefix}.running_mean"] = np.zeros(shape)
            buffers[f"{prefix}.running_var"] = np.ones(shape)
    return ParamSet(tensors, buffers)


def _conv_unit(params, spec, x, prefix, stride, train):
    w = params[f"{prefix}.weight"]
    if spec.use_batchnorm:
        y = ag.conv1d(x, w, None, stride=stride)
        return ag.batch_norm(
            y,
            params[f"{prefix}.bn.gamma"],
            params[f"{prefix}.bn.beta"],
            params.buffers[f"{prefix}.bn.running_mean"],
            params.buffers[f"{prefix}.bn.running_var"],
            train,
        )
    return ag.conv1d(x, w, params[f"{prefix}.bias"], stride=stride)


def forward(params, spec, features, train=False):
    """Logits of shape (B, n_classes) for features of shape (B, n_mels, n_frames).

    With ``train=True`` batch-norm uses batch statistics and updates the
    running averages stored in ``params.buffers``.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3 or features.shape[1:] != (spec.n_mels, spec.n_frames):
        raise ShapeError(
            f"expected features of shape (B, {spec.n_mels}, {spec.n_frames}), got {features.shape}"
        )
    if features.shape[0] < 1:
        raise ShapeError("batch must contain at least one example")
    h = ag.relu(_conv_unit(params, spec, Tensor(features), "stem", 1, train))
    for i in range(len(spec.block_channels)):
        r = ag.relu(_conv_unit(params, spec, h, f"block{i}.conv1", 2, train))
        r = _conv_unit(params, spec, r, f"block{i}.conv2", 1, train)
        s = _conv_unit(params, spec, h, f"block{i}.shortcut", 2, train)
        h = ag.relu(ag.add(r, s))
    pooled = ag.mean_frames(h)
    return ag.linear(pooled, params["head.weight"], params["head.bias"])


def predict_proba(params, spec, features, batch_size=256):
    """Eval-mode softmax probabilities, computed in chunks."""
    features = np.asarray(features, dtype=np.float64)
    out = []
    for start in range(0, features.shape[0], batch_size):
        logits = forward(params, spec, features[start:start + batch_size], train=False)
        out.append(ag.softmax(logits.data))
    if not out:
        return np.zeros((0, spec.n_classes))
    return np.concatenate(out, axis=0)


def predict(params, spec, features, batch_size=256):
    return predict_proba(params, spec, features, batch_size).argmax(axis=1)
