"""Gemeinsame Fixtures für die snnd-Tests."""

from pathlib import Path

import numpy as np
import pytest

from snnd.config import LifParams, SnnConfig, SynthConfig
from snnd.data import Dataset, generate_synthetic
from snnd.network import Network, build

SMALL_RUN_CONFIG = """\
# kleiner Lauf für Tests
model.hidden_sizes = 8
model.timesteps = 3
optim.epochs = 2
optim.batch_size = 8
data.num_classes = 3
data.features = 6
data.samples_per_class = 8
data.train_fraction = 0.75
seed.model = 1
seed.data = 2
"""


@pytest.fixture
def small_config() -> SnnConfig:
    return SnnConfig(layer_sizes=[4, 8, 3], timesteps=3, lif=LifParams())


@pytest.fixture
def small_net(small_config: SnnConfig) -> Network:
    return build(small_config, seed=0)


@pytest.fixture
def tiny_dataset() -> Dataset:
    """12 Beispiele, T=3, D=4, C=3."""
    return generate_synthetic(
        SynthConfig(num_classes=3, features=4, timesteps=3, samples_per_class=4, seed=5)
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def run_config_file(tmp_path: Path) -> Path:
    path = tmp_path / "run.cfg"
    path.write_text(SMALL_RUN_CONFIG, encoding="utf-8")
    return path
