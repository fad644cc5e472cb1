import numpy as np
import pytest

from semsim.config import ExperimentConfig


@pytest.fixture
def default_cfg() -> ExperimentConfig:
    return ExperimentConfig()


@pytest.fixture
def small_cfg() -> ExperimentConfig:
    """Tiny scene for tests that exercise plumbing rather than statistics."""
    return ExperimentConfig.model_validate(
        {"scene": {"width": 32, "height": 24, "num_objects": 2, "duration": 40, "seed": 3}}
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2024)
