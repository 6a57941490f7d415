"""Minimal dense-tensor core: autograd, layers, parameters, SGD."""

from .layers import Conv2d, Flatten, LayerSpec, Linear, MaxPool2d, ReLU, init_layer, layer_forward
from .params import (
    ModelParameters,
    checkpoint_bytes,
    load_checkpoint,
    parse_checkpoint,
    save_checkpoint,
    sgd_step,
)
from .tensor import GradientSet, Tensor, as_tensor, backward, gradients

__all__ = [
    "Conv2d",
    "Flatten",
    "GradientSet",
    "LayerSpec",
    "Linear",
    "MaxPool2d",
    "ModelParameters",
    "ReLU",
    "Tensor",
    "as_tensor",
    "backward",
    "checkpoint_bytes",
    "gradients",
    "init_layer",
    "layer_forward",
    "load_checkpoint",
    "parse_checkpoint",
    "save_checkpoint",
    "sgd_step",
]
