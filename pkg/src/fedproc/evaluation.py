"""Global test-set metrics."""

from __future__ import annotations

import numpy as np

from .data.datasets import LabeledDataset
from .models import extract_representation, predict
from .nn.params import ModelParameters
from .prototypes import PrototypeSet


def evaluate(params: ModelParameters, test: LabeledDataset) -> float:
    """Top-1 accuracy; ties between logits resolve to the lowest class index."""
    logits = predict(params, test.features)
    return float(np.mean(np.argmax(logits, axis=1) == test.labels))


def prototype_alignment(params: ModelParameters, data: LabeledDataset, prototypes: PrototypeSet) -> tuple[float, float]:
    """Mean cosine similarity of each sample's representation to its own-class
    prototype, and to the prototypes of every other class."""
    z = extract_representation(params, data.features)
    c = prototypes.require_complete()
    z = z / np.linalg.norm(z, axis=1, keepdims=True)
    c = c / np.linalg.norm(c, axis=1, keepdims=True)
    sims = z @ c.T
    own = np.zeros_like(sims, dtype=bool)
    own[np.arange(len(sims)), data.labels] = True
    return float(sims[own].mean()), float(sims[~own].mean())
