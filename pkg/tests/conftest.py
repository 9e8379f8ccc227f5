import os

import numpy as np
import pytest

from blockmix.model import DataMatrix, Params, Partitions
from blockmix.sem import SemConfig
from blockmix.simulate import GeneratorSpec, generate


def acceptance_replicates(default: int = 20) -> int:
    return int(os.environ.get("BLOCKMIX_ACCEPTANCE_REPLICATES", default))


def random_params(rng: np.random.Generator, G: int, Lmu: int, Lsigma: int) -> Params:
    return Params(
        pi=rng.dirichlet(np.ones(G)),
        rho_mu=rng.dirichlet(np.ones(Lmu)),
        rho_sigma=rng.dirichlet(np.ones(Lsigma)),
        mu=rng.normal(size=(G, Lmu)),
        sigma2=rng.uniform(0.5, 2.0, size=(G, Lsigma)),
    )


def random_partitions(rng: np.random.Generator, n: int, p: int, G: int, Lmu: int, Lsigma: int) -> Partitions:
    return Partitions(rng.integers(G, size=n), rng.integers(Lmu, size=p), rng.integers(Lsigma, size=p))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quick_sem():
    return SemConfig(burn_in=5, iterations=15, final_partition_runs=5, seed=11)


@pytest.fixture
def separated_theta():
    """Two row clusters, two mean clusters and two variance clusters that are easy to tell apart."""
    return Params(
        pi=[0.5, 0.5],
        rho_mu=[0.5, 0.5],
        rho_sigma=[0.5, 0.5],
        mu=[[-4.0, 4.0], [4.0, -4.0]],
        sigma2=[[0.25, 4.0], [4.0, 0.25]],
    )


@pytest.fixture
def separated_data(separated_theta):
    return generate(GeneratorSpec(n=60, p=40, theta=separated_theta, seed=3))


@pytest.fixture
def small_matrix():
    return DataMatrix(np.arange(12, dtype=float).reshape(3, 4) / 4.0)
