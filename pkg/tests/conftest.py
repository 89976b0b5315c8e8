import numpy as np
import pytest
from hypothesis import settings

from gfa_incomplete.dataset import GroupedDataset, ModalityMatrix
from gfa_incomplete.model import Hyperparams, Observed, fit, init_state, sweep

# fixed example sequence: every run of the suite checks the same instances
settings.register_profile("repo", derandomize=True, deadline=None)
settings.load_profile("repo")


def random_dataset(rng, dims=(4, 3), N=8, K_true=2, missing=0.0, noise=0.3):
    """Low-rank data plus noise, with a random fraction of entries masked.

    Every row and column keeps at least one observed entry so the fit
    preconditions hold.
    """
    Z = rng.standard_normal((K_true, N))
    mods = []
    for m, D in enumerate(dims):
        W = rng.standard_normal((D, K_true))
        X = W @ Z + noise * rng.standard_normal((D, N))
        mask = rng.uniform(size=(D, N)) >= missing
        mask[:, rng.integers(N)] = True
        mask[rng.integers(D), :] = True
        mods.append(ModalityMatrix(f"X{m + 1}", X, mask))
    return GroupedDataset(tuple(mods))


def warm_state(data, hp, seed=0, sweeps=3):
    obs = Observed(data)
    state = init_state(obs, hp, seed)
    for _ in range(sweeps):
        state = sweep(state, obs)
    return state


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_fit(rng):
    data = random_dataset(rng, dims=(6, 4), N=30, K_true=2, missing=0.15)
    hp = Hyperparams(K=4, max_iters=400)
    return data, fit(data, hp, seed=3)
