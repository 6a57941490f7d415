"""Experiment configuration: dataclasses, TOML loading and ``key=value`` overrides.

A config file has up to three sections; every key is optional and
defaults to the values below, so an empty file is a valid config::

    [experiment]
    strategy = "fedproc"   # fedproc | fedavg | solo
    rounds = 100           # T
    local_epochs = 10      # E
    batch_size = 64        # B
    num_clients = 10       # m
    lr = 0.01              # eta
    beta = 0.5             # Dirichlet concentration
    sample_rate = 1.0      # gamma
    seed = 0

    [network]
    encoder = "mlp"
    hidden_dims = [64]
    projection_dim = 256

    [dataset]
    kind = "blobs"
    num_classes = 10
"""

from __future__ import annotations

import dataclasses
import enum
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigurationError
from .models import ENCODER_KINDS, NetworkSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUTPUT_DIR_ENV = "FEDPROC_OUTPUT_DIR"

# single-letter names accepted in [experiment] and in overrides
ALIASES = {
    "T": "rounds",
    "E": "local_epochs",
    "B": "batch_size",
    "m": "num_clients",
    "eta": "lr",
    "gamma": "sample_rate",
}


class StrategyKind(str, enum.Enum):
    FEDPROC = "fedproc"
    FEDAVG = "fedavg"
    SOLO = "solo"


@dataclass(frozen=True)
class NetworkConfig:
    encoder: str = "mlp"
    hidden_dims: tuple[int, ...] = (64,)
    projection_dim: int = 256

    def resolve(self, sample_shape: tuple[int, ...], num_classes: int) -> NetworkSpec:
        if self.encoder == "mlp":
            shape: tuple[int, ...] = (int(_prod(sample_shape)),)
        elif len(sample_shape) == 3:
            shape = tuple(sample_shape)
        else:
            raise ConfigurationError(f"small_cnn needs (H, W, C) samples, dataset has shape {sample_shape}")
        return NetworkSpec(self.encoder, shape, num_classes, tuple(self.hidden_dims), self.projection_dim)


def _prod(shape) -> int:
    out = 1
    for v in shape:
        out *= v
    return out


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "blobs"
    # blobs
    num_classes: int = 10
    dim: int = 32
    per_class: int = 500
    spread: float = 0.35
    test_fraction: float = 0.2
    # idx
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    strategy: StrategyKind = StrategyKind.FEDPROC
    rounds: int = 100
    local_epochs: int = 10
    batch_size: int = 64
    num_clients: int = 10
    lr: float = 0.01
    beta: float = 0.5
    sample_rate: float = 1.0
    seed: int = 0
    output_dir: str = "runs/default"
    workers: int = 1
    # debug knob: fixed blend weight instead of the 1 - t/T schedule
    alpha_override: float | None = None
    checkpoints: bool = False
    network: NetworkConfig = field(default_factory=NetworkConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    def __post_init__(self):
        try:
            object.__setattr__(self, "strategy", StrategyKind(self.strategy))
        except ValueError:
            raise ConfigurationError(
                f"unknown strategy {self.strategy!r}; choose from {[s.value for s in StrategyKind]}"
            ) from None
        self.validate()

    def validate(self) -> None:
        for name in ("rounds", "local_epochs", "batch_size", "num_clients", "workers"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigurationError(f"seed must be a non-negative integer, got {self.seed!r}")
        if not self.lr >= 0:
            raise ConfigurationError(f"lr must be non-negative, got {self.lr}")
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")
        if not 0 < self.sample_rate <= 1:
            raise ConfigurationError(f"sample_rate must lie in (0, 1], got {self.sample_rate}")
        if self.alpha_override is not None and not 0 <= self.alpha_override <= 1:
            raise ConfigurationError(f"alpha_override must lie in [0, 1], got {self.alpha_override}")
        if self.network.encoder not in ENCODER_KINDS:
            raise ConfigurationError(f"network.encoder must be one of {ENCODER_KINDS}, got {self.network.encoder!r}")
        if self.network.projection_dim < 1 or any(h < 1 for h in self.network.hidden_dims):
            raise ConfigurationError("network widths must be positive")
        ds = self.dataset
        if ds.kind == "blobs":
            if ds.num_classes < 2 or ds.per_class < 1 or ds.dim < ds.num_classes or ds.spread < 0:
                raise ConfigurationError(
                    "blobs need num_classes >= 2, per_class >= 1, dim >= num_classes and spread >= 0"
                )
            if not 0 < ds.test_fraction < 1:
                raise ConfigurationError(f"test_fraction must lie in (0, 1), got {ds.test_fraction}")
        elif ds.kind == "idx":
            missing = [k for k in ("train_images", "train_labels", "test_images", "test_labels") if not getattr(ds, k)]
            if missing:
                raise ConfigurationError(f"idx dataset needs paths for {missing}")
        else:
            raise ConfigurationError(f"dataset.kind must be 'blobs' or 'idx', got {ds.kind!r}")

    @property
    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_DIR_ENV) or self.output_dir)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["strategy"] = self.strategy.value
        d["network"]["hidden_dims"] = list(self.network.hidden_dims)
        return d


_SECTIONS = {"experiment": None, "network": NetworkConfig, "dataset": DatasetConfig}


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def from_dict(raw: dict[str, Any]) -> ExperimentConfig:
    """Build a config from nested ``{"experiment": ..., "network": ..., "dataset": ...}``."""
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config sections {sorted(unknown)}")
    top = {ALIASES.get(k, k): v for k, v in raw.get("experiment", {}).items()}
    allowed = _field_names(ExperimentConfig) - {"network", "dataset"}
    bad = set(top) - allowed
    if bad:
        raise ConfigurationError(f"unknown [experiment] keys {sorted(bad)}")
    net = dict(raw.get("network", {}))
    bad = set(net) - _field_names(NetworkConfig)
    if bad:
        raise ConfigurationError(f"unknown [network] keys {sorted(bad)}")
    if "hidden_dims" in net:
        net["hidden_dims"] = tuple(net["hidden_dims"])
    data = dict(raw.get("dataset", {}))
    bad = set(data) - _field_names(DatasetConfig)
    if bad:
        raise ConfigurationError(f"unknown [dataset] keys {sorted(bad)}")
    try:
        return ExperimentConfig(**top, network=NetworkConfig(**net), dataset=DatasetConfig(**data))
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def to_nested(cfg: ExperimentConfig) -> dict[str, Any]:
    d = cfg.to_dict()
    network, dataset = d.pop("network"), d.pop("dataset")
    return {"experiment": d, "network": network, "dataset": dataset}


def _parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """``section.key=value`` (or bare ``key=value`` for [experiment]); values use TOML syntax."""
    out = {k: dict(v) for k, v in raw.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        key = key.strip()
        section, _, name = key.rpartition(".")
        section = section or "experiment"
        if section not in _SECTIONS:
            raise ConfigurationError(f"override {item!r}: unknown section {section!r}")
        out.setdefault(section, {})[ALIASES.get(name, name) if section == "experiment" else name] = _parse_value(text.strip())
    return out


def read_config_file(path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        return tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def load_config(path=None, overrides: list[str] | None = None, seed: int | None = None) -> ExperimentConfig:
    raw = read_config_file(path) if path is not None else {}
    raw = apply_overrides(raw, list(overrides or []))
    if seed is not None:
        raw.setdefault("experiment", {})["seed"] = seed
    return from_dict(raw)
