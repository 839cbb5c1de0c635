import numpy as np
import pytest

from idp_guard.bab import BabConfig, compute_bounds
from idp_guard.network import Network
from idp_guard.synthetic import generate_synthetic_2d
from idp_guard.training import LooFamily, TrainConfig, train_loo_family

# small-network settings for the n=100 synthetic fixture; tau=0 gives exact bounds
FIXTURE_ARCH = (2, 16, 2)
FIXTURE_TRAIN = TrainConfig(epochs=100, batch_size=10, learning_rate=0.1, seed=0)
EXACT = BabConfig(tau=0.0, milp_time_limit=None, total_time_limit=None, workers=1)


def random_network(arch, rng, scale=1.0):
    ws = tuple(rng.normal(0, scale, (arch[i + 1], arch[i])) for i in range(len(arch) - 1))
    bs = tuple(rng.normal(0, scale, arch[i + 1]) for i in range(len(arch) - 1))
    return Network(ws, bs)


def perturbed(net, rng, sigma):
    return Network(tuple(w + rng.normal(0, sigma, w.shape) for w in net.weights),
                   tuple(b + rng.normal(0, sigma, b.shape) for b in net.biases))


def small_family(n, arch, seed, epochs=20):
    data = generate_synthetic_2d(n, seed)
    return train_loo_family(data, arch, TrainConfig(epochs=epochs, batch_size=2, learning_rate=0.1, seed=seed))


def criterion_instances():
    """Twenty small trained families: |D| cycles through 3..8, widths alternate 4 and 8."""
    return [small_family(3 + k % 6, (2, 4, 2) if k % 2 == 0 else (2, 8, 2), seed=k) for k in range(20)]


@pytest.fixture(scope="session")
def instances():
    return criterion_instances()


@pytest.fixture(scope="session")
def fixture_family() -> LooFamily:
    return train_loo_family(generate_synthetic_2d(100, 0), FIXTURE_ARCH, FIXTURE_TRAIN)


@pytest.fixture(scope="session")
def fixture_bounds(fixture_family):
    return compute_bounds(fixture_family, None, EXACT)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
