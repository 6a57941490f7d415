"""Prototypical contrastive federated learning on non-IID data, simulated
end to end on a small numpy autograd core."""

from .config import ExperimentConfig, StrategyKind, load_config
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    FedProcError,
    IngestionError,
    ProtocolError,
    UsageError,
)
from .experiment import run_experiment
from .federation import (
    ClientUpdate,
    FederationState,
    RoundMetrics,
    aggregate_prototypes,
    aggregate_weights,
    client_local_training,
    compute_prototypes,
    run_round,
    sample_clients,
)
from .models import NetworkSpec, build_network, extract_representation, forward_full
from .prototypes import PrototypeSet

__version__ = "0.1.0"

__all__ = [
    "ClientUpdate",
    "ConfigurationError",
    "DegenerateInputError",
    "ExperimentConfig",
    "FedProcError",
    "FederationState",
    "IngestionError",
    "NetworkSpec",
    "PrototypeSet",
    "ProtocolError",
    "RoundMetrics",
    "StrategyKind",
    "UsageError",
    "aggregate_prototypes",
    "aggregate_weights",
    "build_network",
    "client_local_training",
    "compute_prototypes",
    "extract_representation",
    "forward_full",
    "load_config",
    "run_experiment",
    "run_round",
    "sample_clients",
]
