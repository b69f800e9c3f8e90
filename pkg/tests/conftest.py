import numpy as np
import pytest

from flexnoise import Dataset, LogisticModel


@pytest.fixture
def logistic_model():
    return LogisticModel(y0=2.0)


@pytest.fixture
def times_250():
    return np.linspace(0.0, 100.0, 250)


@pytest.fixture
def logistic_truth():
    return np.array([0.08, 50.0])


def make_dataset(noise_spec, n=250, seed=0, truth=(0.08, 50.0), y0=2.0, span=100.0):
    from flexnoise import generate

    model = LogisticModel(y0=y0)
    times = np.linspace(0.0, span, n)
    trajectory = model.simulate(np.asarray(truth), times)
    rng = np.random.default_rng(seed)
    return Dataset(times, generate(trajectory, noise_spec, rng)), model, trajectory
