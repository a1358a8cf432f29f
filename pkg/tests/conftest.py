import sys
from pathlib import Path

import numpy as np
import pytest

from rcl.datasets import TaskSequenceSpec, synthetic_tasks

REPO = Path(__file__).resolve().parents[1]
MNIST_DIR = REPO / "data" / "mnist"


@pytest.fixture(scope="session")
def tiny_tasks():
    """Three separable 12-feature tasks; fast enough to train in milliseconds."""
    spec = TaskSequenceSpec("synthetic", n_tasks=3, seed=7, train_size=240, val_size=60,
                            test_size=60, dim=12, classes=4, spread=0.05)
    return synthetic_tasks(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def mnist_available() -> bool:
    return (MNIST_DIR / "train-images-idx3-ubyte.gz").exists() or \
        (MNIST_DIR / "train-images-idx3-ubyte").exists()


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines, one per criterion, at the end of the run."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
