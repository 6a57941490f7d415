"""Local network: base encoder -> projection head -> output layer.

The feature extractor (encoder and projection head) maps an input to the
representation ``z``; the output layer is a single linear map from ``z`` to
the class logits ``s``.  Parameters are ordered extractor-first, so
``params.split`` separates the two weight groups.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from .errors import ConfigurationError, UsageError
from .nn.layers import Conv2d, Flatten, LayerSpec, Linear, MaxPool2d, ReLU, init_layer, layer_forward
from .nn.params import ModelParameters
from .nn.tensor import Tensor, as_tensor

ENCODER_KINDS = ("mlp", "small_cnn")
DEFAULT_PROJECTION_DIM = 256
# conv channels, conv channels, fc width, fc width
DEFAULT_CNN_HIDDEN = (6, 16, 120, 84)


@dataclass(frozen=True)
class NetworkSpec:
    encoder_kind: str
    input_shape: tuple[int, ...]
    num_classes: int
    hidden_dims: tuple[int, ...] = ()
    projection_dim: int = DEFAULT_PROJECTION_DIM

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "hidden_dims", tuple(int(v) for v in self.hidden_dims))
        if self.encoder_kind not in ENCODER_KINDS:
            raise ConfigurationError(f"encoder_kind must be one of {ENCODER_KINDS}, got {self.encoder_kind!r}")
        if self.projection_dim <= 0:
            raise ConfigurationError(f"projection_dim must be positive, got {self.projection_dim}")
        if self.num_classes <= 0:
            raise ConfigurationError(f"num_classes must be positive, got {self.num_classes}")
        if any(v <= 0 for v in self.input_shape + self.hidden_dims):
            raise ConfigurationError("input_shape and hidden_dims must be positive")
        if self.encoder_kind == "mlp" and len(self.input_shape) != 1:
            raise ConfigurationError(f"mlp encoder takes a flat (P,) input, got {self.input_shape}")
        if self.encoder_kind == "small_cnn":
            if len(self.input_shape) != 3:
                raise ConfigurationError(f"small_cnn takes (H, W, C) input, got {self.input_shape}")
            if self.hidden_dims and len(self.hidden_dims) != 4:
                raise ConfigurationError("small_cnn hidden_dims are (conv1, conv2, fc1, fc2)")

    def to_dict(self) -> dict:
        return {
            "encoder_kind": self.encoder_kind,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "hidden_dims": list(self.hidden_dims),
            "projection_dim": self.projection_dim,
        }


@dataclass(frozen=True)
class ForwardActivations:
    r: np.ndarray
    z: np.ndarray
    s: np.ndarray


@dataclass(frozen=True)
class Architecture:
    """Named layer stacks of the three modules."""

    encoder: tuple[tuple[str, LayerSpec], ...]
    projection: tuple[tuple[str, LayerSpec], ...]
    output: tuple[tuple[str, LayerSpec], ...]
    representation_dim: int

    @property
    def extractor(self):
        return self.encoder + self.projection

    @property
    def layers(self):
        return self.encoder + self.projection + self.output


def _encoder_layers(spec: NetworkSpec) -> list[LayerSpec]:
    if spec.encoder_kind == "mlp":
        layers: list[LayerSpec] = []
        width = spec.input_shape[0]
        for h in spec.hidden_dims:
            layers += [Linear(width, h), ReLU()]
            width = h
        return layers
    c1, c2, f1, f2 = spec.hidden_dims or DEFAULT_CNN_HIDDEN
    _, _, channels = spec.input_shape
    return [
        Conv2d(channels, c1, 5), ReLU(), MaxPool2d(2),
        Conv2d(c1, c2, 5), ReLU(), MaxPool2d(2),
        Flatten(),
        None,  # first fc layer, width known after shape inference
        ReLU(),
        Linear(f1, f2), ReLU(),
    ]


@lru_cache(maxsize=64)
def architecture(spec: NetworkSpec) -> Architecture:
    encoder = _encoder_layers(spec)
    shape = spec.input_shape
    for i, layer in enumerate(encoder):
        if layer is None:
            layer = encoder[i] = Linear(shape[0], (spec.hidden_dims or DEFAULT_CNN_HIDDEN)[2])
        try:
            shape = layer.output_shape(shape)
        except ConfigurationError as exc:
            raise ConfigurationError(f"encoder layer {i}: {exc}") from None
    width = shape[0]
    projection = [Linear(width, width), ReLU(), Linear(width, spec.projection_dim)]
    return Architecture(
        encoder=tuple((f"encoder.{i}", layer) for i, layer in enumerate(encoder)),
        projection=tuple((f"projection.{i}", layer) for i, layer in enumerate(projection)),
        output=(("output", Linear(spec.projection_dim, spec.num_classes)),),
        representation_dim=width,
    )


def build_network(spec: NetworkSpec, rng_seed: int) -> ModelParameters:
    """Initialize every layer from one seeded stream, in layer order."""
    arch = architecture(spec)
    rng = np.random.default_rng(rng_seed)
    entries = []
    split = 0
    for name, layer in arch.layers:
        for (suffix, _), value in zip(layer.param_shapes(), init_layer(layer, rng)):
            entries.append((f"{name}.{suffix}", value))
        if name == arch.projection[-1][0]:
            split = len(entries)
    return ModelParameters(entries, split, spec)


def parameter_count(spec: NetworkSpec) -> int:
    return sum(
        int(np.prod(shape)) for _, layer in architecture(spec).layers for _, shape in layer.param_shapes()
    )


def _spec_of(params: ModelParameters) -> NetworkSpec:
    if not isinstance(params.spec, NetworkSpec):
        raise UsageError("parameters carry no NetworkSpec; build them with build_network()")
    return params.spec


def _batch(spec: NetworkSpec, x) -> tuple[Tensor, bool]:
    x = as_tensor(x)
    if x.shape == spec.input_shape:
        return Tensor(x.data[None]), True
    if x.shape[1:] != spec.input_shape:
        raise UsageError(f"input shape {x.shape} does not match network input {spec.input_shape}")
    return x, False


def _run(stack, leaves: Mapping[str, Tensor], h: Tensor) -> Tensor:
    for name, layer in stack:
        params = [leaves[f"{name}.{suffix}"] for suffix, _ in layer.param_shapes()]
        h = layer_forward(layer, params, h, name)
    return h


def forward_tensors(spec: NetworkSpec, leaves: Mapping[str, Tensor], x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Graph-building forward over a batch; returns (r, z, s) tensors."""
    arch = architecture(spec)
    r = _run(arch.encoder, leaves, x)
    z = _run(arch.projection, leaves, r)
    s = _run(arch.output, leaves, z)
    return r, z, s


def _constant_leaves(params: ModelParameters) -> dict[str, Tensor]:
    return {n: Tensor(a) for n, a in params.items()}


def forward_full(params: ModelParameters, x) -> ForwardActivations:
    spec = _spec_of(params)
    xb, single = _batch(spec, x)
    r, z, s = forward_tensors(spec, _constant_leaves(params), xb)
    if single:
        return ForwardActivations(r.data[0], z.data[0], s.data[0])
    return ForwardActivations(r.data, z.data, s.data)


def extract_representation(params: ModelParameters, x) -> np.ndarray:
    """z = f_e(w_e; x), touching only the feature-extractor weights."""
    spec = _spec_of(params)
    xb, single = _batch(spec, x)
    arch = architecture(spec)
    leaves = {n: Tensor(params[n]) for n in params.extractor_names}
    z = _run(arch.extractor, leaves, xb).data
    return z[0] if single else z


def classify(params: ModelParameters, z) -> np.ndarray:
    """s = f_c(w_c; z), the output layer on its own."""
    spec = _spec_of(params)
    arch = architecture(spec)
    zt = as_tensor(z)
    single = zt.data.ndim == 1
    if single:
        zt = Tensor(zt.data[None])
    leaves = {n: Tensor(params[n]) for n in params.output_names}
    s = _run(arch.output, leaves, zt).data
    return s[0] if single else s


def predict(params: ModelParameters, x, batch_size: int = 1024) -> np.ndarray:
    """Class logits for a batch, evaluated in chunks."""
    x = np.asarray(x, dtype=np.float64)
    out = [forward_full(params, x[i: i + batch_size]).s for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, _spec_of(params).num_classes))
