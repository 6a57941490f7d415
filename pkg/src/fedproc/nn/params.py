"""Named parameter collections, SGD and the binary checkpoint format."""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping

import numpy as np

from ..errors import ConfigurationError, IngestionError, ProtocolError
from .tensor import Tensor

CHECKPOINT_MAGIC = b"FPCK"
CHECKPOINT_VERSION = 1


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, order="C", copy=True)
    arr.flags.writeable = False
    return arr


class ModelParameters(Mapping[str, np.ndarray]):
    """Ordered, read-only mapping of parameter name to float64 array.

    Entries ``[:split]`` belong to the feature extractor (encoder plus
    projection head), entries ``[split:]`` to the output layer.  ``spec`` is
    the architecture the arrays were built for, if known.
    """

    __slots__ = ("_names", "_arrays", "split", "spec")

    def __init__(self, entries, split: int, spec: Any = None):
        items = list(entries.items() if isinstance(entries, Mapping) else entries)
        if not 0 <= split <= len(items):
            raise ConfigurationError(f"partition marker {split} outside 0..{len(items)}")
        self._names = tuple(name for name, _ in items)
        if len(set(self._names)) != len(self._names):
            raise ConfigurationError("duplicate parameter names")
        self._arrays = tuple(_frozen(a) for _, a in items)
        self.split = split
        self.spec = spec

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._arrays[self._names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __repr__(self) -> str:
        return f"ModelParameters({len(self)} entries, split={self.split}, size={self.num_scalars()})"

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    @property
    def arrays(self) -> tuple[np.ndarray, ...]:
        return self._arrays

    @property
    def extractor_names(self) -> tuple[str, ...]:
        return self._names[: self.split]

    @property
    def output_names(self) -> tuple[str, ...]:
        return self._names[self.split:]

    def num_scalars(self) -> int:
        return sum(a.size for a in self._arrays)

    def layout(self) -> tuple[tuple[str, tuple[int, ...]], ...]:
        return tuple((n, a.shape) for n, a in zip(self._names, self._arrays))

    def replace(self, arrays) -> ModelParameters:
        """Same names, split and spec with new arrays (given in entry order)."""
        arrays = list(arrays)
        if len(arrays) != len(self._arrays):
            raise ProtocolError(f"expected {len(self._arrays)} arrays, got {len(arrays)}")
        for name, old, new in zip(self._names, self._arrays, arrays):
            if np.shape(new) != old.shape:
                raise ProtocolError(f"shape of {name!r} changed from {old.shape} to {np.shape(new)}")
        return ModelParameters(zip(self._names, arrays), self.split, self.spec)

    def map(self, fn: Callable[[str, np.ndarray], np.ndarray]) -> ModelParameters:
        return self.replace(fn(n, a) for n, a in zip(self._names, self._arrays))

    def leaves(self) -> dict[str, Tensor]:
        """Fresh gradient-tracking tensors, one per entry (the arrays are copied)."""
        return {n: Tensor(a, requires_grad=True) for n, a in zip(self._names, self._arrays)}

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self._arrays]) if self._arrays else np.zeros(0)

    def unflatten(self, flat: np.ndarray) -> ModelParameters:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.num_scalars():
            raise ProtocolError(f"flat vector has {flat.size} entries, expected {self.num_scalars()}")
        out, pos = [], 0
        for a in self._arrays:
            out.append(flat[pos: pos + a.size].reshape(a.shape))
            pos += a.size
        return self.replace(out)

    def same_layout(self, other: ModelParameters) -> bool:
        return self.layout() == other.layout() and self.split == other.split

    def bit_equal(self, other: ModelParameters) -> bool:
        return self.same_layout(other) and all(
            a.tobytes() == b.tobytes() for a, b in zip(self._arrays, other._arrays)
        )


def sgd_step(params: ModelParameters, grads: Mapping[str, np.ndarray], lr: float) -> ModelParameters:
    """Return ``w - lr * g`` entry by entry; ``params`` is left untouched."""
    if not lr > 0:
        raise ConfigurationError(f"learning rate must be positive, got {lr}")
    missing = [n for n in params.names if n not in grads]
    if missing:
        raise ProtocolError(f"no gradient for {missing}")
    return params.map(lambda n, w: w - lr * grads[n])


# ---------------------------------------------------------------------------
# checkpoint files
#
#   magic "FPCK" | version u8 | split u32 | count u32
#   per entry: name_len u16 | name utf-8 | ndim u8 | dims u32 * ndim | float64 LE data
# ---------------------------------------------------------------------------

def checkpoint_bytes(params: ModelParameters) -> bytes:
    parts = [CHECKPOINT_MAGIC, struct.pack("<BII", CHECKPOINT_VERSION, params.split, len(params))]
    for name, arr in zip(params.names, params.arrays):
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.astype("<f8").tobytes(order="C"))
    return b"".join(parts)


def save_checkpoint(params: ModelParameters, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(params))
    os.replace(tmp, path)


def parse_checkpoint(buf: bytes, spec: Any = None) -> ModelParameters:
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise IngestionError(f"checkpoint truncated at offset {pos} (wanted {n} bytes)")
        chunk = buf[pos: pos + n]
        pos += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise IngestionError("not a parameter checkpoint (bad magic at offset 0)")
    version, split, count = struct.unpack("<BII", take(9))
    if version != CHECKPOINT_VERSION:
        raise IngestionError(f"unsupported checkpoint version {version} at offset 4")
    entries = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(take(8 * n), dtype="<f8").reshape(shape)
        entries.append((name, data))
    if pos != len(buf):
        raise IngestionError(f"trailing bytes after offset {pos}")
    return ModelParameters(entries, split, spec)


def load_checkpoint(path, spec: Any = None) -> ModelParameters:
    return parse_checkpoint(Path(path).read_bytes(), spec)
