from .datasets import (
    ClientDataset,
    LabeledDataset,
    batches,
    blob_means,
    generate_blobs,
    train_test_split,
)
from .idx import idx_bytes, load_idx, parse_idx, write_idx
from .partition import (
    PartitionConfig,
    class_histograms,
    dirichlet_partition,
    largest_remainder,
    mean_max_client_share,
)

__all__ = [
    "ClientDataset",
    "LabeledDataset",
    "PartitionConfig",
    "batches",
    "blob_means",
    "class_histograms",
    "dirichlet_partition",
    "generate_blobs",
    "idx_bytes",
    "largest_remainder",
    "load_idx",
    "mean_max_client_share",
    "parse_idx",
    "train_test_split",
    "write_idx",
]
