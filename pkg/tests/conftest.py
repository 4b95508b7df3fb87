import numpy as np
import pytest

from gtc import SyntheticConfig, generate_synthetic

import helpers


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def two_path_graph():
    return helpers.two_path_graph(seed=0)


@pytest.fixture(scope="session")
def small_synth():
    """60-node synthetic graph, cheap enough for trainer tests."""
    config = SyntheticConfig(n_target=60, n_classes=3, d_feat=8, d_aux=4,
                             aux_sizes=(30,), separation=2.0, noise_std=0.5,
                             p_in=0.3, p_out=0.03, seed=3)
    return generate_synthetic(config)


@pytest.fixture(scope="session")
def default_synth():
    """The default synthetic dataset used by the headline checks."""
    return generate_synthetic(SyntheticConfig())
