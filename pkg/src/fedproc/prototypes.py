"""Per-class representation means."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError


@dataclass(frozen=True)
class PrototypeSet:
    """``vectors[k]`` is the class-k prototype; it is meaningful only where ``present[k]``."""

    vectors: np.ndarray
    present: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64, copy=True)
        present = np.array(self.present, dtype=bool, copy=True)
        if vectors.ndim != 2 or present.shape != (vectors.shape[0],):
            raise ProtocolError(f"prototype set needs (K, Q) vectors and (K,) flags, got {vectors.shape}, {present.shape}")
        vectors[~present] = 0.0
        vectors.flags.writeable = False
        present.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "present", present)

    @classmethod
    def complete(cls, vectors) -> PrototypeSet:
        vectors = np.asarray(vectors, dtype=np.float64)
        return cls(vectors, np.ones(vectors.shape[0], dtype=bool))

    @property
    def num_classes(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def is_complete(self) -> bool:
        return bool(self.present.all())

    def missing(self) -> list[int]:
        return [int(k) for k in np.flatnonzero(~self.present)]

    def require_complete(self) -> np.ndarray:
        if not self.is_complete:
            raise ProtocolError(f"prototypes missing for classes {self.missing()}")
        return self.vectors

    def bit_equal(self, other: PrototypeSet) -> bool:
        return (
            self.vectors.tobytes() == other.vectors.tobytes()
            and self.present.tobytes() == other.present.tobytes()
        )
