"""Differentiable numeric core and the temporal-convolution classifier."""

from .autograd import Tensor, backward, constant_loss, cross_entropy, soft_cross_entropy, softmax
from .model import ModelSpec, build_model, forward, predict, predict_proba
from .params import ParamSet, average_params, load_params, save_params, sgd_step

__all__ = [
    "ModelSpec",
    "ParamSet",
    "Tensor",
    "average_params",
    "backward",
    "build_model",
    "constant_loss",
    "cross_entropy",
    "forward",
    "load_params",
    "predict",
    "predict_proba",
    "save_params",
    "sgd_step",
    "soft_cross_entropy",
    "softmax",
]
