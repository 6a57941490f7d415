"""Experiment orchestration: data, partition, T rounds, metrics on disk."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import seeding
from .config import ExperimentConfig, StrategyKind, to_nested
from .data.datasets import ClientDataset, LabeledDataset, generate_blobs, train_test_split
from .data.idx import load_idx
from .data.partition import PartitionConfig, class_histograms, dirichlet_partition
from .evaluation import evaluate
from .federation import FederationState, RoundMetrics, init_state, initial_params, run_round
from .models import NetworkSpec
from .nn.params import ModelParameters, load_checkpoint, save_checkpoint
from .prototypes import PrototypeSet

log = logging.getLogger(__name__)

METRICS_HEADER = ("round", "alpha", "mean_train_loss", "top1_accuracy", "participants")
METRICS_FILE = "metrics.csv"
SIDECAR_FILE = "run.json"


@dataclass(frozen=True)
class PreparedData:
    clients: list[ClientDataset]
    test: LabeledDataset
    spec: NetworkSpec


def load_dataset(cfg: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    ds = cfg.dataset
    if ds.kind == "blobs":
        full = generate_blobs(
            ds.num_classes, ds.dim, ds.per_class, ds.spread, seeding.stream_seed(cfg.seed, seeding.DATA)
        )
        return train_test_split(full, ds.test_fraction, seeding.stream_seed(cfg.seed, seeding.SPLIT))
    train = load_idx(ds.train_images, ds.train_labels)
    test = load_idx(ds.test_images, ds.test_labels, num_classes=train.num_classes)
    return train, test


def prepare(cfg: ExperimentConfig) -> PreparedData:
    """Build the dataset, hold out the server's test set and partition the rest."""
    train, test = load_dataset(cfg)
    if cfg.network.encoder == "mlp":
        train, test = train.flattened(), test.flattened()
    spec = cfg.network.resolve(train.sample_shape, train.num_classes)
    part = PartitionConfig(cfg.num_clients, cfg.beta, seeding.stream_seed(cfg.seed, seeding.PARTITION))
    return PreparedData(dirichlet_partition(train, part), test, spec)


def _fmt(x: float) -> str:
    return repr(float(x))


def metrics_row(m: RoundMetrics) -> list[str]:
    return [str(m.t), _fmt(m.alpha), _fmt(m.mean_train_loss), _fmt(m.top1_accuracy),
            " ".join(str(i) for i in m.participating_clients)]


def _write_csv(path: Path, rows: Sequence[Sequence[str]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    writer.writerows(rows)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue())
    os.replace(tmp, path)


def read_metrics(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def _write_json(path: Path, payload: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _sidecar(cfg: ExperimentConfig, data: PreparedData, series: list[RoundMetrics]) -> dict:
    streams = {
        name: seeding.stream_seed(cfg.seed, tag)
        for name, tag in (("data", seeding.DATA), ("split", seeding.SPLIT),
                          ("partition", seeding.PARTITION), ("init", seeding.INIT))
    }
    summary = None
    if series:
        last = series[-1]
        summary = {"final_top1_accuracy": last.top1_accuracy, "final_top1_std": last.top1_std,
                   "rounds_completed": len(series)}
    return {
        "config": to_nested(cfg),
        "seeds": {"experiment": cfg.seed, "streams": streams},
        "network": data.spec.to_dict(),
        "client_sizes": [len(c) for c in data.clients],
        "client_class_histograms": class_histograms(data.clients).tolist(),
        "test_size": len(data.test),
        "top1_std_per_round": [m.top1_std for m in series] if cfg.strategy is StrategyKind.SOLO else None,
        "summary": summary,
    }


# --- checkpoints -------------------------------------------------------------

def _prototype_params(p: PrototypeSet) -> ModelParameters:
    return ModelParameters([("prototypes", p.vectors)], split=1)


def _save_state(directory: Path, state: FederationState, completed: int) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    save_checkpoint(state.params, directory / "global.ckpt")
    if state.prototypes is not None:
        save_checkpoint(_prototype_params(state.prototypes), directory / "prototypes.ckpt")
    for i, p in enumerate(state.client_params or ()):
        save_checkpoint(p, directory / f"client_{i}.ckpt")
    _write_json(directory / "state.json", {"completed_rounds": completed})


def _load_state(directory: Path, cfg: ExperimentConfig, spec: NetworkSpec, m: int) -> tuple[FederationState, int] | None:
    meta = directory / "state.json"
    if not meta.is_file():
        return None
    completed = json.loads(meta.read_text())["completed_rounds"]
    params = load_checkpoint(directory / "global.ckpt", spec)
    prototypes = None
    if cfg.strategy is StrategyKind.FEDPROC:
        prototypes = PrototypeSet.complete(load_checkpoint(directory / "prototypes.ckpt")["prototypes"])
    client_params = None
    if cfg.strategy is StrategyKind.SOLO:
        client_params = tuple(load_checkpoint(directory / f"client_{i}.ckpt", spec) for i in range(m))
    return FederationState(params, prototypes, client_params), completed


def run_experiment(cfg: ExperimentConfig, resume: bool = False) -> list[RoundMetrics]:
    """Run every round, rewriting the metrics CSV after each one.

    With ``cfg.checkpoints`` the round state is saved too, and
    ``resume=True`` continues an interrupted run from its last saved round.
    """
    out = cfg.resolved_output_dir
    out.mkdir(parents=True, exist_ok=True)
    data = prepare(cfg)
    ckpt_dir = out / "checkpoints"
    rows: list[list[str]] = []
    series: list[RoundMetrics] = []
    start = 0
    loaded = _load_state(ckpt_dir, cfg, data.spec, len(data.clients)) if resume else None
    if loaded is not None:
        state, start = loaded
        rows = [[r[h] for h in METRICS_HEADER] for r in read_metrics(out / METRICS_FILE)[:start]]
        if len(rows) != start:
            raise RuntimeError(f"{out / METRICS_FILE} holds {len(rows)} rows, checkpoint says {start}")
        series = [
            RoundMetrics(int(r[0]), float(r[1]), float(r[2]), float(r[3]),
                         tuple(int(i) for i in r[4].split()))
            for r in rows
        ]
        log.info("resuming %s at round %d", out, start)
    else:
        state = init_state(cfg, initial_params(cfg, data.spec), data.clients)
    _write_json(out / SIDECAR_FILE, _sidecar(cfg, data, series))
    _write_csv(out / METRICS_FILE, rows)

    executor = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for t in range(start, cfg.rounds):
            state, metrics = run_round(t, state, data.clients, data.test, cfg, executor)
            series.append(metrics)
            rows.append(metrics_row(metrics))
            _write_csv(out / METRICS_FILE, rows)
            if cfg.checkpoints:
                _save_state(ckpt_dir, state, t + 1)
            log.info("round %d/%d alpha=%.3f loss=%.4f top1=%.4f",
                     t + 1, cfg.rounds, metrics.alpha, metrics.mean_train_loss, metrics.top1_accuracy)
    finally:
        if executor is not None:
            executor.shutdown()
    _write_json(out / SIDECAR_FILE, _sidecar(cfg, data, series))
    return series


def initial_accuracy(cfg: ExperimentConfig) -> float:
    """Top-1 accuracy of the untrained initial global model."""
    data = prepare(cfg)
    return evaluate(initial_params(cfg, data.spec), data.test)


def final_accuracy(path) -> float:
    rows = read_metrics(path)
    if not rows:
        raise ValueError(f"{path} has no rounds")
    return float(rows[-1]["top1_accuracy"])
