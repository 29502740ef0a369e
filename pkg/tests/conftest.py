import time
from dataclasses import dataclass

import numpy as np
import pytest

from schoolsweep.model.train import TrainConfig, train_toy
from schoolsweep.synthetic import make_classification_set


@dataclass
class TrainedFixture:
    params: dict
    images: np.ndarray
    labels: np.ndarray
    centers: list
    n_train: int
    n_val: int
    train_seconds: float

    @property
    def test_slice(self) -> slice:
        return slice(self.n_train + self.n_val, None)


@pytest.fixture(scope="session")
def trained_synthetic_model() -> TrainedFixture:
    """2,000 synthetic 64 px tiles at a 1:2 ratio, toy model trained once
    per session and shared by the acceptance criteria."""
    n = 2000
    images, labels, centers = make_classification_set(n, seed=20_240_101)
    n_train, n_val = int(n * 0.8), int(n * 0.1)
    config = TrainConfig(max_epochs=12, seed=11, initial_lr=3e-3)
    start = time.perf_counter()
    params, history = train_toy(
        images[:n_train],
        labels[:n_train],
        images[n_train : n_train + n_val],
        labels[n_train : n_train + n_val],
        config,
    )
    elapsed = time.perf_counter() - start
    return TrainedFixture(params, images, labels, centers, n_train, n_val, elapsed)
