"""Server and client sides of the federated protocol.

One round: the server samples clients and hands each the same snapshot of
the global weights and prototypes; every client trains locally and then
recomputes its class prototypes with its final weights; the server
averages the prototypes (per class, over the clients that hold the class)
and the weights (weighted by local sample counts).  ``fedavg`` trains with
cross entropy only and carries no prototypes; ``solo`` never aggregates.
"""

from __future__ import annotations

import statistics
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import seeding
from .config import ExperimentConfig, StrategyKind
from .data.datasets import ClientDataset, LabeledDataset, batches
from .errors import FedProcError, ProtocolError
from .evaluation import evaluate
from .losses import alpha as alpha_schedule
from .losses import blended_loss, cross_entropy
from .models import build_network, extract_representation, forward_tensors
from .nn.params import ModelParameters, sgd_step
from .nn.tensor import Tensor, gradients
from .prototypes import PrototypeSet


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    new_params: ModelParameters
    new_prototypes: PrototypeSet | None
    num_samples: int
    mean_train_loss: float

    def __post_init__(self):
        if self.num_samples < 1:
            raise ProtocolError(f"client {self.client_id} reported {self.num_samples} samples")


@dataclass(frozen=True)
class RoundMetrics:
    t: int
    alpha: float
    mean_train_loss: float
    top1_accuracy: float
    participating_clients: tuple[int, ...]
    # spread of per-client accuracies, solo only
    top1_std: float | None = None


@dataclass(frozen=True)
class FederationState:
    params: ModelParameters
    prototypes: PrototypeSet | None = None
    # per-client models, solo only
    client_params: tuple[ModelParameters, ...] | None = None


def compute_prototypes(params: ModelParameters, ds: LabeledDataset, chunk: int = 1024) -> PrototypeSet:
    """Mean representation of each class the dataset holds; other classes are absent."""
    if len(ds) == 0:
        raise ProtocolError("cannot compute prototypes of an empty dataset")
    z = np.concatenate(
        [extract_representation(params, ds.features[i: i + chunk]) for i in range(0, len(ds), chunk)]
    )
    vectors = np.zeros((ds.num_classes, z.shape[1]))
    present = np.zeros(ds.num_classes, dtype=bool)
    for k in range(ds.num_classes):
        members = ds.labels == k
        if members.any():
            vectors[k] = z[members].mean(axis=0)
            present[k] = True
    return PrototypeSet(vectors, present)


def _canonical(updates: Sequence[ClientUpdate]) -> list[ClientUpdate]:
    if not updates:
        raise ProtocolError("no client updates to aggregate")
    ordered = sorted(updates, key=lambda u: u.client_id)
    ids = [u.client_id for u in ordered]
    if len(set(ids)) != len(ids):
        raise ProtocolError(f"duplicate client ids in updates: {ids}")
    return ordered


def aggregate_prototypes(updates: Sequence[ClientUpdate], fallback: PrototypeSet | None = None) -> PrototypeSet:
    """Per-class mean over the clients where the class is present.

    A class no participant holds is an error unless ``fallback`` supplies it.
    """
    ordered = _canonical(updates)
    sets = [u.new_prototypes for u in ordered]
    if any(p is None for p in sets):
        raise ProtocolError("prototype aggregation needs prototypes from every participant")
    shape = sets[0].vectors.shape
    if any(p.vectors.shape != shape for p in sets):
        raise ProtocolError(f"prototype shapes differ: {[p.vectors.shape for p in sets]}")
    total = np.zeros(shape)
    count = np.zeros(shape[0], dtype=np.int64)
    for p in sets:
        total[p.present] += p.vectors[p.present]
        count += p.present
    present = count > 0
    vectors = np.zeros(shape)
    vectors[present] = total[present] / count[present, None]
    if not present.all():
        absent = np.flatnonzero(~present)
        if fallback is None or not fallback.present[absent].all():
            raise ProtocolError(f"classes {absent.tolist()} are absent from every participating client")
        vectors[absent] = fallback.vectors[absent]
    return PrototypeSet.complete(vectors)


def aggregate_weights(updates: Sequence[ClientUpdate]) -> ModelParameters:
    """Entry-wise average of client weights, weighted by local sample counts.

    Summation runs in client-id order.  The result is clipped to the
    envelope of the inputs, which only ever removes rounding error.
    """
    ordered = _canonical(updates)
    ref = ordered[0].new_params
    for u in ordered[1:]:
        if not u.new_params.same_layout(ref):
            raise ProtocolError(f"client {u.client_id} sent parameters with a different layout")
    total = sum(u.num_samples for u in ordered)
    fractions = [u.num_samples / total for u in ordered]
    out = []
    for j, name in enumerate(ref.names):
        stack = [u.new_params.arrays[j] for u in ordered]
        acc = np.zeros_like(stack[0])
        for f, w in zip(fractions, stack):
            acc += f * w
        lo = np.minimum.reduce(stack)
        hi = np.maximum.reduce(stack)
        out.append(np.clip(acc, lo, hi))
    return ref.replace(out)


def sample_clients(m: int, gamma: float, round_seed: int) -> list[int]:
    """max(1, round(gamma * m)) distinct client ids, ascending."""
    if not 0 < gamma <= 1:
        raise ProtocolError(f"sampling rate must lie in (0, 1], got {gamma}")
    n = max(1, int(np.floor(gamma * m + 0.5)))
    if n >= m:
        return list(range(m))
    chosen = np.random.default_rng(round_seed).choice(m, size=n, replace=False)
    return sorted(int(i) for i in chosen)


def client_local_training(
    client_id: int,
    t: int,
    T: int,
    global_params: ModelParameters,
    global_prototypes: PrototypeSet | None,
    ds: ClientDataset,
    cfg: ExperimentConfig,
) -> ClientUpdate:
    """E epochs of mini-batch SGD from ``global_params``, then fresh prototypes."""
    strategy = StrategyKind(cfg.strategy)
    use_prototypes = strategy is StrategyKind.FEDPROC
    if use_prototypes:
        if global_prototypes is None:
            raise ProtocolError(f"client {client_id}: fedproc round {t} started without global prototypes")
        global_prototypes.require_complete()
    a = cfg.alpha_override if cfg.alpha_override is not None else alpha_schedule(t, T)
    spec = global_params.spec
    params = global_params
    epoch_losses: list[float] = []
    for epoch in range(cfg.local_epochs):
        epoch_losses = []
        epoch_seed = seeding.stream_seed(cfg.seed, seeding.BATCHES, t, client_id, epoch)
        for b, (xb, yb) in enumerate(batches(ds, cfg.batch_size, epoch_seed)):
            try:
                leaves = params.leaves()
                _, z, s = forward_tensors(spec, leaves, Tensor(xb))
                if use_prototypes:
                    loss = blended_loss(z, s, yb, global_prototypes, a)
                else:
                    loss = cross_entropy(s, yb)
                if cfg.lr > 0:
                    params = sgd_step(params, gradients(loss, leaves), cfg.lr)
            except FedProcError as exc:
                raise type(exc)(f"client {client_id}, round {t}, epoch {epoch}, batch {b}: {exc}") from exc
            epoch_losses.append(loss.item())
    prototypes = compute_prototypes(params, ds) if use_prototypes else None
    return ClientUpdate(
        client_id=client_id,
        new_params=params,
        new_prototypes=prototypes,
        num_samples=len(ds),
        mean_train_loss=float(np.mean(epoch_losses)),
    )


def init_state(cfg: ExperimentConfig, params: ModelParameters, clients: Sequence[ClientDataset]) -> FederationState:
    """Round-0 state from initial weights.

    For fedproc the initial global prototypes are the aggregate of every
    client's prototypes under the initial feature extractor.
    """
    strategy = StrategyKind(cfg.strategy)
    if strategy is StrategyKind.FEDPROC:
        updates = [
            ClientUpdate(c.client_id, params, compute_prototypes(params, c), len(c), 0.0) for c in clients
        ]
        return FederationState(params, aggregate_prototypes(updates))
    if strategy is StrategyKind.SOLO:
        return FederationState(params, None, tuple(params for _ in clients))
    return FederationState(params)


def initial_params(cfg: ExperimentConfig, spec) -> ModelParameters:
    return build_network(spec, seeding.stream_seed(cfg.seed, seeding.INIT))


def run_round(
    t: int,
    state: FederationState,
    clients: Sequence[ClientDataset],
    test: LabeledDataset,
    cfg: ExperimentConfig,
    executor: Executor | None = None,
) -> tuple[FederationState, RoundMetrics]:
    strategy = StrategyKind(cfg.strategy)
    T = cfg.rounds
    participants = sample_clients(
        len(clients), cfg.sample_rate, seeding.stream_seed(cfg.seed, seeding.SAMPLING, t)
    )

    def task(i: int) -> ClientUpdate:
        start = state.client_params[i] if strategy is StrategyKind.SOLO else state.params
        return client_local_training(i, t, T, start, state.prototypes, clients[i], cfg)

    if executor is None:
        updates = [task(i) for i in participants]
    else:
        updates = list(executor.map(task, participants))
    updates.sort(key=lambda u: u.client_id)
    mean_loss = float(np.mean([u.mean_train_loss for u in updates]))

    if strategy is StrategyKind.SOLO:
        models = list(state.client_params)
        for u in updates:
            models[u.client_id] = u.new_params
        accs = [evaluate(p, test) for p in models]
        new_state = FederationState(state.params, None, tuple(models))
        top1, std = float(np.mean(accs)), statistics.pstdev(accs)
    else:
        prototypes = None
        if strategy is StrategyKind.FEDPROC:
            prototypes = aggregate_prototypes(updates, fallback=state.prototypes)
        new_params = aggregate_weights(updates)
        new_state = FederationState(new_params, prototypes)
        top1, std = evaluate(new_params, test), None

    metrics = RoundMetrics(
        t=t,
        alpha=alpha_schedule(t, T),
        mean_train_loss=mean_loss,
        top1_accuracy=top1,
        participating_clients=tuple(u.client_id for u in updates),
        top1_std=std,
    )
    return new_state, metrics
