import numpy as np
import pytest

from fedproc.config import load_config
from fedproc.models import NetworkSpec, build_network

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    return NetworkSpec("mlp", (6,), num_classes=4, hidden_dims=(7,), projection_dim=5)


@pytest.fixture
def tiny_params(tiny_spec):
    return build_network(tiny_spec, 3)


@pytest.fixture
def toy_config(tmp_path):
    """A 3-client blobs problem small enough to run many rounds in a test."""

    def make(*overrides, seed=0):
        base = [
            "T=5", "E=2", "B=16", "m=3", "lr=0.1", "beta=0.5",
            "dataset.num_classes=4", "dataset.dim=8", "dataset.per_class=30", "dataset.spread=0.3",
            "network.hidden_dims=[16]", "network.projection_dim=8",
            f"output_dir='{tmp_path / 'run'}'",
        ]
        return load_config(None, base + list(overrides), seed)

    return make
