"""IDX (MNIST-style) image/label files.

Layout: a big-endian u32 magic (0x00000803 for u8 images of shape
(n, rows, cols), 0x00000801 for u8 labels of shape (n,)), one big-endian
u32 per dimension, then the raw bytes.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from ..errors import IngestionError
from .datasets import LabeledDataset

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read_bytes(path) -> bytes:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc.strerror}") from exc
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(buf: bytes, expected_magic: int, what: str = "idx") -> np.ndarray:
    if len(buf) < 4:
        raise IngestionError(f"{what}: truncated at offset {len(buf)} while reading magic number")
    (magic,) = struct.unpack(">I", buf[:4])
    if magic != expected_magic:
        raise IngestionError(f"{what}: magic number 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}")
    ndim = expected_magic & 0xFF
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise IngestionError(f"{what}: truncated at offset {len(buf)} inside the {ndim}-dimension header")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    size = int(np.prod(dims, dtype=np.int64))
    if len(buf) < header + size:
        raise IngestionError(
            f"{what}: truncated at offset {len(buf)}, header promises {size} data bytes from offset {header}"
        )
    if len(buf) > header + size:
        raise IngestionError(f"{what}: {len(buf) - header - size} unexpected trailing bytes at offset {header + size}")
    return np.frombuffer(buf, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path, labels_path, num_classes: int | None = None) -> LabeledDataset:
    """Images come back as (n, rows, cols, 1) floats in [0, 1]."""
    images = parse_idx(_read_bytes(images_path), IMAGES_MAGIC, str(images_path))
    labels = parse_idx(_read_bytes(labels_path), LABELS_MAGIC, str(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise IngestionError(
            f"count mismatch: {images.shape[0]} images (offset 4 of {images_path}) "
            f"vs {labels.shape[0]} labels (offset 4 of {labels_path})"
        )
    k = int(labels.max()) + 1 if num_classes is None else num_classes
    if labels.size and labels.max() >= k:
        raise IngestionError(f"label {int(labels.max())} exceeds num_classes={k}")
    features = images.astype(np.float64)[..., None] / 255.0
    return LabeledDataset(features, labels.astype(np.int64), k)


def idx_bytes(array: np.ndarray) -> bytes:
    """Encode a u8 array of rank 1 or 3 as IDX."""
    array = np.asarray(array)
    if array.ndim not in (1, 3):
        raise ValueError(f"IDX writer supports rank 1 and 3, got {array.ndim}")
    magic = LABELS_MAGIC if array.ndim == 1 else IMAGES_MAGIC
    header = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    return header + array.astype(np.uint8).tobytes()


def write_idx(path, array: np.ndarray) -> None:
    Path(path).write_bytes(idx_bytes(array))
