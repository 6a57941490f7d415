"""Dirichlet label-skew partitioning across clients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, ProtocolError
from .datasets import ClientDataset, LabeledDataset

MAX_PARTITION_RETRIES = 100


@dataclass(frozen=True)
class PartitionConfig:
    num_clients: int
    beta: float
    seed: int = 0

    def __post_init__(self):
        if self.num_clients < 1:
            raise ConfigurationError(f"need at least one client, got {self.num_clients}")
        if not self.beta > 0:
            raise ConfigurationError(f"Dirichlet concentration must be positive, got {self.beta}")


def largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total``, closest to ``proportions * total``.

    Ties in the fractional parts go to the lower index.
    """
    exact = np.asarray(proportions, dtype=np.float64) * total
    counts = np.floor(exact).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(exact - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _draw_counts(class_counts: np.ndarray, cfg: PartitionConfig, rng: np.random.Generator) -> np.ndarray:
    """(K, m) table of how many class-k samples client i receives."""
    table = np.zeros((class_counts.size, cfg.num_clients), dtype=np.int64)
    for k, n_k in enumerate(class_counts):
        p = rng.dirichlet(np.full(cfg.num_clients, cfg.beta))
        table[k] = largest_remainder(p, int(n_k))
    return table


def dirichlet_partition(data: LabeledDataset, cfg: PartitionConfig) -> list[ClientDataset]:
    """Split ``data`` so each class is shared out by an independent Dirichlet(beta) draw.

    A draw that leaves any client empty is discarded and redrawn from the
    next sub-seed, up to :data:`MAX_PARTITION_RETRIES` times.
    """
    class_counts = data.class_counts()
    if len(data) < cfg.num_clients:
        raise ProtocolError(f"{len(data)} samples cannot fill {cfg.num_clients} non-empty clients")
    for attempt in range(MAX_PARTITION_RETRIES):
        rng = np.random.default_rng([cfg.seed, attempt])
        table = _draw_counts(class_counts, cfg, rng)
        if np.all(table.sum(axis=0) > 0):
            break
    else:
        raise ProtocolError(
            f"every one of {MAX_PARTITION_RETRIES} Dirichlet draws left a client empty "
            f"(m={cfg.num_clients}, beta={cfg.beta})"
        )
    assigned: list[list[np.ndarray]] = [[] for _ in range(cfg.num_clients)]
    for k in range(data.num_classes):
        idx = np.flatnonzero(data.labels == k)
        idx = idx[rng.permutation(idx.size)]
        bounds = np.concatenate([[0], np.cumsum(table[k])])
        for i in range(cfg.num_clients):
            assigned[i].append(idx[bounds[i]: bounds[i + 1]])
    clients = []
    for i, parts in enumerate(assigned):
        idx = np.sort(np.concatenate(parts))
        clients.append(ClientDataset(data.features[idx], data.labels[idx], data.num_classes, client_id=i))
    return clients


def class_histograms(clients: list[ClientDataset]) -> np.ndarray:
    """(m, K) sample counts per client and class."""
    return np.stack([c.class_counts() for c in clients])


def mean_max_client_share(clients: list[ClientDataset]) -> float:
    """Average over classes of the largest fraction of that class held by one client."""
    hist = class_histograms(clients).astype(np.float64)
    totals = hist.sum(axis=0)
    held = totals > 0
    return float(np.mean(hist[:, held].max(axis=0) / totals[held]))
