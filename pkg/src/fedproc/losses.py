"""Cross-entropy, cosine similarity, the global prototypical contrastive
loss, the alpha schedule and the blended local objective.

Every loss accepts a single sample (``z`` of shape (Q,), integer label) or
a batch (``z`` of shape (N, Q), label array) and returns a scalar
:class:`~fedproc.nn.Tensor`, averaged over the batch.  Gradients flow into
``z`` and ``s``; prototypes are constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ProtocolError, UsageError
from .nn import tensor as T
from .nn.tensor import Tensor, as_tensor
from .prototypes import PrototypeSet


@dataclass(frozen=True)
class RoundSchedule:
    t: int
    T: int

    def __post_init__(self):
        if self.T < 1 or not 0 <= self.t < self.T:
            raise UsageError(f"round index must satisfy 0 <= t < T, got t={self.t}, T={self.T}")

    @property
    def alpha(self) -> float:
        return alpha(self.t, self.T)


def alpha(t: int, T: int) -> float:
    """Weight of the prototype term in round ``t`` of ``T``: 1 - t/T."""
    if T < 1 or not 0 <= t < T:
        raise UsageError(f"alpha needs 0 <= t < T, got t={t}, T={T}")
    return 1.0 - t / T


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity of a zero-norm vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _labels(y, n: int, num_classes: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(y))
    if labels.shape != (n,):
        raise UsageError(f"expected {n} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise UsageError("labels must be integers")
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise UsageError(f"label out of range 0..{num_classes - 1}: {labels.min()}..{labels.max()}")
    return labels


def _as_batch(x) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim == 1:
        return T.reshape(x, (1, x.shape[0]))
    if x.data.ndim != 2:
        raise UsageError(f"expected a vector or a (N, D) batch, got shape {x.shape}")
    return x


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean of -log softmax(logits)[label] over rows, with max subtraction."""
    n, k = logits.shape
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = np.mean(log_norm - shifted[rows, labels])

    def fn(g):
        probs = np.exp(shifted - log_norm[:, None])
        probs[rows, labels] -= 1.0
        return (probs * (float(g) / n),)

    return T.node(np.asarray(loss), (logits,), fn, "softmax_cross_entropy")


def cross_entropy(s, y) -> Tensor:
    s = _as_batch(s)
    n, k = s.shape
    if k < 2:
        raise UsageError(f"cross entropy needs at least 2 classes, got {k}")
    return softmax_cross_entropy(s, _labels(y, n, k))


def _prototype_matrix(prototypes) -> np.ndarray:
    if isinstance(prototypes, PrototypeSet):
        vectors = prototypes.require_complete()
    elif isinstance(prototypes, Tensor):
        vectors = prototypes.data  # constant: no edge back into the graph
    else:
        vectors = np.asarray(prototypes, dtype=np.float64)
    if vectors.ndim != 2:
        raise ProtocolError(f"prototypes must form a (K, Q) matrix, got shape {vectors.shape}")
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError(f"zero-norm prototype for classes {np.flatnonzero(norms == 0.0).tolist()}")
    return vectors / norms[:, None]


def cosine_logits(z: Tensor, prototypes) -> Tensor:
    """(N, K) matrix of sim(z_n, c_k); differentiable in ``z`` only."""
    unit_c = _prototype_matrix(prototypes)
    if z.shape[1] != unit_c.shape[1]:
        raise ProtocolError(f"representation dim {z.shape[1]} != prototype dim {unit_c.shape[1]}")
    norms = np.linalg.norm(z.data, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateInputError("zero-norm representation in prototypical contrastive loss")
    unit_z = z.data / norms
    sims = unit_z @ unit_c.T

    def fn(g):
        gu = g @ unit_c
        return ((gu - unit_z * np.sum(gu * unit_z, axis=1, keepdims=True)) / norms,)

    return T.node(sims, (z,), fn, "cosine_logits")


def gpc_loss(z, y, prototypes) -> Tensor:
    """Softmax over cosine similarities to every global prototype, scored at the true class.

    The positive term plus the sum over every other class is exactly the
    full softmax denominator, so this is cross entropy on the similarities.
    No temperature is applied.
    """
    z = _as_batch(z)
    sims = cosine_logits(z, prototypes)
    return softmax_cross_entropy(sims, _labels(y, z.shape[0], sims.shape[1]))


def blended_loss(z, s, y, prototypes, schedule: RoundSchedule | float) -> Tensor:
    """alpha * gpc_loss + (1 - alpha) * cross_entropy."""
    a = schedule.alpha if isinstance(schedule, RoundSchedule) else float(schedule)
    if not 0.0 <= a <= 1.0:
        raise UsageError(f"alpha must lie in [0, 1], got {a}")
    return T.weighted_sum([(a, gpc_loss(z, y, prototypes)), (1.0 - a, cross_entropy(s, y))])


def gpc_upper_bound(num_classes: int) -> float:
    """Loss when the true class has similarity -1 and every other class +1."""
    k = num_classes
    return float(-np.log(np.exp(-1.0) / (np.exp(-1.0) + (k - 1) * np.e)))
