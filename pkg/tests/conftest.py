import os
from pathlib import Path

import numpy as np
import pytest

from stvae import _pykernels
from stvae.data import write_synthetic_dataset

from oracles import ACCEPTANCE_LINES

try:
    from stvae import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [pytest.param(_pykernels, id="python")]
if _ckernels is not None:
    BACKENDS.append(pytest.param(_ckernels, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory) -> Path:
    """Small synthetic IDX dataset shared by trainer tests."""
    return write_synthetic_dataset(tmp_path_factory.mktemp("synth"), n_train=640, n_test=128, seed=5)


@pytest.fixture(scope="session")
def desk_data_dir(tmp_path_factory) -> tuple[Path, str]:
    """Fashion-MNIST if STVAE_DATA_DIR points at it, else a synthetic stand-in."""
    env = os.environ.get("STVAE_DATA_DIR")
    if env and (Path(env) / "train-images-idx3-ubyte").exists() or \
            env and (Path(env) / "train-images-idx3-ubyte.gz").exists():
        return Path(env), "fashion-mnist"
    return write_synthetic_dataset(tmp_path_factory.mktemp("desk"), 6000, 1000, seed=2024), "synthetic"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
