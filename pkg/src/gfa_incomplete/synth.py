"""Synthetic data drawn from the GFA generative model.

Loadings come from the ARD prior ``w_jk ~ N(0, 1/alpha_k)`` and each
modality gets isotropic Gaussian noise with a fixed precision.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DataError, GroupedDataset, ModalityMatrix, load_dataset, save_dataset

FOUR_FACTOR = "paper-4-factor"

# Active loadings use precision 1, switched-off ones 1e6.
# Factors 0,1 are shared; factor 2 is specific to modality 2, factor 3 to modality 1.
FOUR_FACTOR_ALPHA = np.array(
    [
        [1.0, 1.0, 1e6, 1.0],
        [1.0, 1.0, 1.0, 1e6],
    ]
)


def builtin_latents(name: str, n_observations: int, seed: int = 0) -> np.ndarray:
    """Structured latent curves, ``K x N``.

    ``paper-4-factor`` returns four curves, each an integer number of periods
    over the sample so their rows are (near) orthogonal:

    0. sine, 4 periods, variance 1.0
    1. cosine, 4 periods, variance 0.4
    2. Gaussian white noise drawn from ``seed``, variance 0.65
    3. square wave, 2 periods, variance 1.1

    The two shared curves get different variances. With equal variances any
    rotation of the sine/cosine plane fits equally well and the recovered
    axes are arbitrary.

    The modality-2 factor is random so that it is not a deterministic
    function of the others; ``seed`` also picks a circular shift of the
    time axis, which leaves the periodic rows orthogonal.
    """
    if name != FOUR_FACTOR:
        raise DataError(f"unknown latent pattern {name!r}")
    N = int(n_observations)
    if N <= 0:
        raise DataError("number of observations must be positive")
    t = np.arange(N) / N
    rng = np.random.default_rng(seed)
    shift = rng.uniform(0.0, 1.0)
    t = np.mod(t + shift, 1.0)
    Z = np.empty((4, N))
    Z[0] = np.sqrt(2.0) * np.sin(2 * np.pi * 4 * t)
    Z[1] = np.sqrt(0.8) * np.cos(2 * np.pi * 4 * t)
    Z[2] = np.sqrt(0.65) * rng.standard_normal(N)
    Z[3] = np.sqrt(1.1) * np.where(np.mod(2 * t, 1.0) < 0.5, 1.0, -1.0)
    return Z


@dataclass
class SynthSpec:
    n_observations: int = 500
    dims: tuple[int, ...] = (50, 30)
    latents: str | np.ndarray = FOUR_FACTOR
    alpha: np.ndarray = field(default_factory=lambda: FOUR_FACTOR_ALPHA.copy())
    tau: tuple[float, ...] = (5.0, 10.0)
    seed: int = 0

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.tau = tuple(float(t) for t in self.tau)
        self.alpha = np.asarray(self.alpha, dtype=float)
        if any(d < 1 for d in self.dims):
            raise DataError(f"all dims must be >= 1, got {self.dims}")
        if len(self.tau) != len(self.dims):
            raise DataError("need one noise precision per modality")
        if any(t <= 0 for t in self.tau):
            raise DataError("noise precisions must be positive")
        if self.alpha.ndim != 2 or self.alpha.shape[0] != len(self.dims):
            raise DataError(f"alpha must be M x K, got shape {self.alpha.shape}")
        if (self.alpha <= 0).any():
            raise DataError("alpha entries must be positive")
        if isinstance(self.latents, str):
            if self.latents == FOUR_FACTOR and (self.alpha.shape[1] != 4 or len(self.dims) != 2):
                raise DataError(f"{FOUR_FACTOR!r} needs K=4 and two modalities")
        else:
            Z = np.asarray(self.latents, dtype=float)
            if Z.shape != (self.alpha.shape[1], self.n_observations):
                raise DataError(
                    f"latents have shape {Z.shape}, expected {(self.alpha.shape[1], self.n_observations)}"
                )
            self.latents = Z

    @property
    def n_factors(self) -> int:
        return self.alpha.shape[1]

    def to_dict(self) -> dict:
        return {
            "n_observations": self.n_observations,
            "dims": list(self.dims),
            "latents": self.latents if isinstance(self.latents, str) else self.latents.tolist(),
            "alpha": self.alpha.tolist(),
            "tau": list(self.tau),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        if "alpha" in d:
            d["alpha"] = np.asarray(d["alpha"], dtype=float)
        if "latents" in d and not isinstance(d["latents"], str):
            d["latents"] = np.asarray(d["latents"], dtype=float)
        return cls(**d)


@dataclass
class SynthOutput:
    data: GroupedDataset
    true_W: list[np.ndarray]
    true_Z: np.ndarray
    spec: SynthSpec


def generate(spec: SynthSpec) -> SynthOutput:
    rng = np.random.default_rng(spec.seed)
    if isinstance(spec.latents, str):
        Z = builtin_latents(spec.latents, spec.n_observations, spec.seed)
    else:
        Z = np.array(spec.latents)
    K = Z.shape[0]
    Ws, mods = [], []
    for m, (D, tau) in enumerate(zip(spec.dims, spec.tau)):
        W = rng.standard_normal((D, K)) / np.sqrt(spec.alpha[m])
        noise = rng.standard_normal((D, spec.n_observations)) / np.sqrt(tau)
        Ws.append(W)
        mods.append(ModalityMatrix(f"X{m + 1}", W @ Z + noise))
    return SynthOutput(GroupedDataset(tuple(mods)), Ws, Z, spec)


def reference_spec(seed: int = 0, high_dim: bool = False) -> SynthSpec:
    """Default synthetic setup: N=500, D=(50, 30) or (20000, 200), tau=(5, 10)."""
    dims = (20000, 200) if high_dim else (50, 30)
    return SynthSpec(n_observations=500, dims=dims, seed=seed)


def save_synth(out: SynthOutput, directory: str | os.PathLike) -> Path:
    """Write the data in the on-disk dataset format plus ground truth under ``truth/``."""
    d = Path(directory)
    save_dataset(out.data, d)
    t = d / "truth"
    t.mkdir(parents=True, exist_ok=True)
    np.savetxt(t / "Z.csv", out.true_Z, delimiter=",", fmt="%.17g")
    for name, W in zip(out.data.names, out.true_W):
        np.savetxt(t / f"W_{name}.csv", W, delimiter=",", fmt="%.17g")
    spec = out.spec.to_dict()
    if not isinstance(out.spec.latents, str):
        spec["latents"] = "Z.csv"
    (t / "spec.json").write_text(json.dumps(spec, indent=2) + "\n")
    return d


def load_synth(directory: str | os.PathLike) -> SynthOutput:
    d = Path(directory)
    data = load_dataset(d)
    t = d / "truth"
    spec = json.loads((t / "spec.json").read_text())
    Z = np.loadtxt(t / "Z.csv", delimiter=",", ndmin=2)
    if spec["latents"] == "Z.csv":
        spec["latents"] = Z
    Ws = [np.loadtxt(t / f"W_{name}.csv", delimiter=",", ndmin=2) for name in data.names]
    return SynthOutput(data, Ws, Z, SynthSpec.from_dict(spec))
