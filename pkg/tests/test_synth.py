import numpy as np
import pytest

from gfa_incomplete.analysis import correlation_matrix
from gfa_incomplete.dataset import DataError
from gfa_incomplete.synth import (
    FOUR_FACTOR_ALPHA,
    FOUR_FACTOR,
    SynthSpec,
    builtin_latents,
    generate,
    load_synth,
    reference_spec,
    save_synth,
)


def test_builtin_latents_shape_and_low_correlation():
    Z = builtin_latents(FOUR_FACTOR, 500, seed=0)
    assert Z.shape == (4, 500)
    R = correlation_matrix(Z, Z)
    off = np.abs(R[~np.eye(4, dtype=bool)])
    assert off.max() < 0.15


def test_builtin_latents_errors_and_determinism():
    with pytest.raises(DataError):
        builtin_latents("no-such-pattern", 10)
    with pytest.raises(DataError):
        builtin_latents(FOUR_FACTOR, 0)
    assert np.array_equal(builtin_latents(FOUR_FACTOR, 50, 7), builtin_latents(FOUR_FACTOR, 50, 7))


def test_spec_validation():
    with pytest.raises(DataError):
        SynthSpec(dims=(50, 0))
    with pytest.raises(DataError):
        SynthSpec(tau=(5.0, -1.0))
    with pytest.raises(DataError):
        SynthSpec(dims=(5, 5, 5), tau=(1, 1, 1))  # the four-factor pattern needs two modalities
    with pytest.raises(DataError):
        SynthSpec(alpha=np.zeros((2, 4)))


def test_generate_is_deterministic():
    a, b = generate(reference_spec(seed=3)), generate(reference_spec(seed=3))
    assert np.array_equal(a.data[0].values, b.data[0].values)
    assert np.array_equal(a.true_W[1], b.true_W[1])


def test_generate_noise_level_matches_tau():
    out = generate(reference_spec(seed=0))
    for m, tau in enumerate((5.0, 10.0)):
        resid = out.data[m].values - out.true_W[m] @ out.true_Z
        var = resid.var(axis=1)
        assert abs(var.mean() * tau - 1) < 0.05
        assert np.mean(np.abs(var * tau - 1) < 0.15) > 0.95


def test_switched_off_loadings_are_tiny():
    out = generate(reference_spec(seed=1))
    for m in range(2):
        for k in np.flatnonzero(FOUR_FACTOR_ALPHA[m] >= 1e6):
            w = out.true_W[m][:, k]
            assert np.abs(w).max() <= 0.01
            assert (w**2).sum() < 1e-4 * len(w)


def test_custom_latents():
    Z = np.random.default_rng(0).standard_normal((2, 20))
    spec = SynthSpec(n_observations=20, dims=(3, 2), latents=Z, alpha=np.ones((2, 2)), tau=(1, 1))
    out = generate(spec)
    assert np.array_equal(out.true_Z, Z)
    with pytest.raises(DataError):
        SynthSpec(n_observations=21, dims=(3, 2), latents=Z, alpha=np.ones((2, 2)), tau=(1, 1))


def test_save_load_round_trip(tmp_path):
    out = generate(SynthSpec(n_observations=30, dims=(4, 3), seed=2))
    save_synth(out, tmp_path)
    back = load_synth(tmp_path)
    assert np.array_equal(back.true_Z, out.true_Z)
    assert np.array_equal(back.true_W[0], out.true_W[0])
    assert np.array_equal(back.data[1].values, out.data[1].values)
    assert back.spec.to_dict() == out.spec.to_dict()
