"""Comparison methods: classical CCA with permutation inference, and GFA on median-imputed data."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import DataError, GroupedDataset, impute_median
from .model import FitResult, Hyperparams, fit_restarts

RIDGE = 1e-8


@dataclass
class CcaResult:
    U: np.ndarray  # D1 x K
    V: np.ndarray  # D2 x K
    canonical_correlations: np.ndarray  # K, descending
    scores: np.ndarray  # 2 x K x N
    averaged_latents: np.ndarray  # K x N

    def to_dict(self) -> dict:
        return {
            "canonical_correlations": self.canonical_correlations.tolist(),
            "U": self.U.tolist(),
            "V": self.V.tolist(),
        }


@dataclass
class PermutationTest:
    n_perms: int
    p_values: np.ndarray
    null_max_correlations: np.ndarray
    observed: np.ndarray
    seed: int

    def to_dict(self) -> dict:
        return {
            "n_perms": self.n_perms,
            "seed": self.seed,
            "observed": self.observed.tolist(),
            "p_values": self.p_values.tolist(),
            "null_max_correlations": self.null_max_correlations.tolist(),
        }


def _prepare(X: np.ndarray, name: str, n_components: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Standardise rows; optionally project onto leading principal components.

    Returns the (possibly reduced) data and the map from reduced back to
    standardised-variable space.
    """
    X = np.asarray(X, float)
    if not np.isfinite(X).all():
        raise DataError(f"{name} has missing values; impute before CCA")
    X = X - X.mean(axis=1, keepdims=True)
    sd = X.std(axis=1, keepdims=True)
    if (sd == 0).any():
        raise DataError(f"{name} has a constant variable")
    X = X / sd
    if n_components is None:
        return X, np.eye(X.shape[0])
    U, _, _ = np.linalg.svd(X, full_matrices=False)
    P = U[:, :n_components]
    return P.T @ X, P


class _Whitened:
    def __init__(self, X: np.ndarray, name: str):
        D, N = X.shape
        C = X @ X.T
        evals, evecs = np.linalg.eigh(C)
        if D > N - 1 or evals[0] <= 1e-10 * evals[-1]:
            raise DataError(
                f"within-modality covariance of {name} is singular (D={D}, N={N}); "
                "reduce dimensionality (e.g. PCA) or regularise first"
            )
        evals = evals + RIDGE * evals.mean()
        self.inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
        self.X = X
        self.Xw = self.inv_sqrt @ X


def _cca(w1: _Whitened, w2: _Whitened, K: int, X2: np.ndarray | None = None):
    Xw2 = w2.Xw if X2 is None else w2.inv_sqrt @ X2
    A, s, Bt = np.linalg.svd(w1.Xw @ Xw2.T, full_matrices=False)
    return A[:, :K], s[:K], Bt[:K].T


def cca_fit(X1: np.ndarray, X2: np.ndarray, K: int, n_components: int | None = None) -> CcaResult:
    """Classical CCA via SVD of the whitened cross-covariance.

    Inputs are ``D x N`` and are standardised per variable internally. Weights
    satisfy ``u^T X1 X1^T u = 1`` on the standardised data.
    """
    A1, P1 = _prepare(X1, "X1", n_components)
    A2, P2 = _prepare(X2, "X2", n_components)
    if A1.shape[1] != A2.shape[1]:
        raise DataError("X1 and X2 must have the same number of observations")
    N = A1.shape[1]
    if not 1 <= K <= min(A1.shape[0], A2.shape[0], N - 1):
        raise DataError(f"K={K} must lie in [1, min(D1, D2, N-1)]")
    w1, w2 = _Whitened(A1, "X1"), _Whitened(A2, "X2")
    a, _, b = _cca(w1, w2, K)
    u = w1.inv_sqrt @ a
    v = w2.inv_sqrt @ b
    s1, s2 = u.T @ A1, v.T @ A2
    # exact unit-norm scores on the unregularised data
    n1 = np.sqrt((s1**2).sum(axis=1))
    n2 = np.sqrt((s2**2).sum(axis=1))
    u, s1 = u / n1, s1 / n1[:, None]
    v, s2 = v / n2, s2 / n2[:, None]
    r = np.clip((s1 * s2).sum(axis=1), 0.0, 1.0)
    order = np.argsort(-r, kind="stable")
    u, v, s1, s2, r = u[:, order], v[:, order], s1[order], s2[order], r[order]
    return CcaResult(
        U=P1 @ u,
        V=P2 @ v,
        canonical_correlations=r,
        scores=np.stack([s1, s2]),
        averaged_latents=0.5 * (s1 + s2),
    )


def cca_permutation_test(
    X1: np.ndarray,
    X2: np.ndarray,
    K: int,
    n_perms: int = 1000,
    seed: int = 0,
    n_components: int | None = None,
    jobs: int = 1,
) -> PermutationTest:
    """Max-statistic permutation test on the canonical correlations.

    Observations of X2 are shuffled, CCA is refitted and the first-mode
    correlation is kept as the null sample. ``p_k = (1 + #{null >= r_k}) / (1 + n_perms)``.
    """
    A1, _ = _prepare(X1, "X1", n_components)
    A2, _ = _prepare(X2, "X2", n_components)
    w1, w2 = _Whitened(A1, "X1"), _Whitened(A2, "X2")
    observed = cca_fit(X1, X2, K, n_components).canonical_correlations
    N = A1.shape[1]
    streams = np.random.SeedSequence(seed).spawn(n_perms)

    def one(ss):
        perm = np.random.default_rng(ss).permutation(N)
        _, s, _ = _cca(w1, w2, 1, A2[:, perm])
        return min(float(s[0]), 1.0)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            null = np.array(list(pool.map(one, streams)))
    else:
        null = np.array([one(ss) for ss in streams])
    p = (1 + (null[None, :] >= observed[:, None]).sum(axis=1)) / (1 + n_perms)
    return PermutationTest(n_perms, p, null, observed, seed)


def gfa_median_pipeline(
    data: GroupedDataset,
    hp: Hyperparams | None = None,
    seeds: Sequence[int] | None = None,
    jobs: int = 1,
) -> tuple[FitResult, list[FitResult]]:
    """Impute each variable's median, then fit GFA as if the data were complete."""
    completed = impute_median(data, data)
    best, runs = fit_restarts(completed, hp, seeds, jobs)
    for r in runs:
        r.tag = "median-imputation"
    return best, runs
