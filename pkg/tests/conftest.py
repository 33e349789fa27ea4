import numpy as np
import pytest

from bihawkes import HawkesModel, SimulationConfig, simulate_thinning

DEMO_PARAMS = dict(mu=[0.1, 0.2], alpha=[[0.5, 0.1], [0.2, 0.6]], beta=[[0.3, 0.2], [0.8, 1.0]])
# posterior means reported for the 1966-2024 fit
REFERENCE_MEANS = dict(
    mu=[0.004, 0.003],
    alpha=[[0.139, 0.343], [0.018, 0.039]],
    beta=[[1.226, 0.050], [0.621, 0.963]],
)
FULL_HORIZON = 21_219.0


@pytest.fixture
def demo_model():
    return HawkesModel(**DEMO_PARAMS)


@pytest.fixture
def reference_model():
    return HawkesModel(**REFERENCE_MEANS)


def random_stable_model(rng, k=2):
    mu = rng.uniform(0.05, 0.5, k)
    alpha = rng.uniform(0.0, 0.7, (k, k))
    rho = max(abs(np.linalg.eigvals(alpha)))
    target = rng.uniform(0.2, 0.9)
    if rho > target:
        alpha *= target / rho
    beta = np.exp(rng.uniform(np.log(0.1), np.log(5.0), (k, k)))
    return HawkesModel(mu, alpha, beta)


def random_sequence(model, rng, n_max=200, expected=100, seed=None):
    """Simulate roughly ``expected`` events; truncate to ``n_max`` (horizon = last kept event)."""
    rates = np.linalg.solve(np.eye(model.k) - model.alpha, model.mu)
    T = expected / rates.sum()
    seed = int(rng.integers(2**32)) if seed is None else seed
    seq = simulate_thinning(model, SimulationConfig(T, seed))
    if len(seq) > n_max:
        times, marks = seq.times[:n_max], seq.marks[:n_max]
        seq = type(seq)(times, marks, float(times[-1]), model.k)
    return seq
