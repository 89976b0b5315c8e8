"""Prediction, error metrics, factor relevance and factor matching."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import DataError, GroupedDataset
from .model import Observed, VariationalState, latent_posterior, relative_variance

logger = logging.getLogger(__name__)

MOST_RELEVANT_RVAR = 0.075
SHARED_RATIO = (1e-3, 300.0)


# -- prediction ---------------------------------------------------------------


@dataclass
class Prediction:
    values: np.ndarray  # D_target x N
    unsupported: np.ndarray  # observations with nothing observed in the source modalities


def predict_modality(state: VariationalState, data: GroupedDataset, target: int | str) -> Prediction:
    """Posterior-mean prediction of one modality from all the others.

    The target modality's values and mask are ignored. Missing entries of the
    source modalities are left out of the latent posterior, one K x K system
    per observation where masks differ.
    """
    t = data.index(target)
    if data.dims != state.dims:
        raise DataError(f"dataset dims {data.dims} do not match the model {state.dims}")
    sources = [m for m in range(data.n_modalities) if m != t]
    obs = Observed(data)
    mu, _, _ = latent_posterior(state, obs, sources)
    seen = np.zeros(obs.N, dtype=bool)
    for m in sources:
        seen |= obs.mask[m].any(axis=0)
    if not seen.all():
        logger.warning("%d observations have no observed source entries; predicting 0", (~seen).sum())
    mu[:, ~seen] = 0.0
    return Prediction(state.mu_w[t] @ mu, ~seen)


def predict_missing(state: VariationalState, data_train: GroupedDataset) -> list[tuple[int, int, int, float]]:
    """Predicted value ``<w_j> mu_z[:, n]`` for every masked training entry."""
    if data_train.dims != state.dims or data_train.n_observations != state.N:
        raise DataError("dataset does not match the fitted state")
    out = []
    for m, mod in enumerate(data_train):
        rows, cols = np.nonzero(~mod.mask)
        vals = np.einsum("ik,ki->i", state.mu_w[m][rows], state.mu_z[:, cols])
        out.extend(zip([m] * len(rows), rows.tolist(), cols.tolist(), vals.tolist()))
    return out


def missing_prediction_matrix(state: VariationalState, modality: int) -> np.ndarray:
    """Full reconstruction ``<W> <Z>`` of a modality (read it at the masked entries)."""
    return state.mu_w[modality] @ state.mu_z


# -- metrics ----------------------------------------------------------------


def mse(truth: np.ndarray, pred: np.ndarray, mask: np.ndarray | None = None) -> float:
    truth, pred = np.asarray(truth, float), np.asarray(pred, float)
    if truth.shape != pred.shape:
        raise DataError(f"shape mismatch {truth.shape} vs {pred.shape}")
    err = (truth - pred) ** 2
    if mask is not None:
        return float(err[mask].mean())
    return float(err.mean())


def rmse_per_variable(truth: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Relative MSE of each variable (row): sum of squared errors over sum of squared truth."""
    truth, pred = np.asarray(truth, float), np.asarray(pred, float)
    if truth.shape != pred.shape:
        raise DataError(f"shape mismatch {truth.shape} vs {pred.shape}")
    denom = (truth**2).sum(axis=1)
    zero = np.flatnonzero(denom == 0)
    if zero.size:
        raise DataError(f"variable {zero[0]} is identically zero; relative MSE undefined")
    return ((truth - pred) ** 2).sum(axis=1) / denom


def training_means(train: GroupedDataset, modality: int | str) -> np.ndarray:
    mod = train[modality]
    count = mod.mask.sum(axis=1)
    empty = np.flatnonzero(count == 0)
    if empty.size:
        raise DataError(f"variable {empty[0]} of {mod.name!r} has no observed training entries")
    return mod.filled().sum(axis=1) / count


def chance_level(
    train: GroupedDataset, test: GroupedDataset, modality: int | str, relative: bool = False
) -> float | np.ndarray:
    """Error of predicting every test entry by its variable's training mean.

    Returns the MSE over observed test entries, or the per-variable relative
    MSE when ``relative`` is set.
    """
    means = training_means(train, modality)
    mod = test[modality]
    pred = np.broadcast_to(means[:, None], mod.values.shape)
    if relative:
        return rmse_per_variable(mod.filled(), np.where(mod.mask, pred, 0.0))
    return mse(mod.values, pred, mod.mask)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, float).ravel()
    b = np.asarray(b, float).ravel()
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a**2).sum() * (b**2).sum())
    return float((a @ b) / denom) if denom > 0 else 0.0


# -- factor relevance ----------------------------------------------------------


@dataclass
class FactorReport:
    rvar: np.ndarray  # M x K
    var: np.ndarray  # M x K
    ratio: np.ndarray  # (M-1) x K, modality m+1 over modality 0
    classification: list[str]
    most_relevant: list[int]
    degenerate: bool = False
    thresholds: dict = field(
        default_factory=lambda: {"most_relevant_rvar": MOST_RELEVANT_RVAR, "shared_ratio": list(SHARED_RATIO)}
    )

    def rows(self, names: list[str] | None = None) -> list[dict]:
        M, K = self.rvar.shape
        names = names or [f"X{m + 1}" for m in range(M)]
        out = []
        for k in range(K):
            for m in range(M):
                out.append(
                    {
                        "factor": k,
                        "modality": names[m],
                        "rvar": float(self.rvar[m, k]),
                        "var": float(self.var[m, k]),
                        "r_k": float(self.ratio[0, k]) if self.ratio.size else float("nan"),
                        "class": self.classification[k],
                        "most_relevant": k in self.most_relevant,
                    }
                )
        return out


def classify_ratio(r: float, names: tuple[str, str] = ("X1", "X2")) -> str:
    lo, hi = SHARED_RATIO
    if r > hi:
        return f"specific-{names[1]}"
    if r < lo:
        return f"specific-{names[0]}"
    return "shared"


def factor_report(state: VariationalState, names: list[str] | None = None) -> FactorReport:
    """Relative variance, variance explained and the modality ratio for each factor.

    With more than two modalities the ratio is reported for every modality
    against the first one; the classification uses the ratio to modality 2.
    """
    M, K = state.M, state.K
    names = names or [f"X{m + 1}" for m in range(M)]
    rvar = np.zeros((M, K))
    var = np.zeros((M, K))
    degenerate = False
    for m in range(M):
        W = state.mu_w[m]
        norms = (W**2).sum(axis=0)
        total = norms.sum()
        if total <= 0:
            degenerate = True
            continue
        rvar[m] = relative_variance(W)
        var[m] = norms / (total + (1.0 / state.E_tau(m)).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = var[1:] / var[:1] if M > 1 else np.zeros((0, K))
    if M > 1:
        classes = [classify_ratio(r, (names[0], names[1])) for r in ratio[0]]
    else:
        classes = [f"specific-{names[0]}"] * K
    if degenerate:
        return FactorReport(np.zeros((M, K)), np.zeros((M, K)), np.zeros_like(ratio), ["inactive"] * K, [], True)
    most = [int(k) for k in np.flatnonzero((rvar > MOST_RELEVANT_RVAR).any(axis=0))]
    return FactorReport(rvar, var, ratio, classes, most)


def true_classification(alpha: np.ndarray, names: tuple[str, str] = ("X1", "X2"), off: float = 1e3) -> list[str]:
    """Shared/specific labels implied by a generating ARD pattern (``alpha >= off`` means switched off)."""
    on = np.asarray(alpha) < off
    out = []
    for k in range(on.shape[1]):
        if on[:, k].all():
            out.append("shared")
        elif on[0, k]:
            out.append(f"specific-{names[0]}")
        else:
            out.append(f"specific-{names[1]}")
    return out


# -- factor matching ------------------------------------------------------------


@dataclass
class MatchResult:
    pairs: list[tuple[int, int, float]]  # (true index, inferred index, signed r)
    unmatched_true: list[int]
    unmatched_inferred: list[int]

    @property
    def signs(self) -> dict[int, int]:
        return {i: (1 if r >= 0 else -1) for _, i, r in self.pairs}


def correlation_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pearson r between every row of ``A`` and every row of ``B`` (zero for constant rows)."""
    A = A - A.mean(axis=1, keepdims=True)
    B = B - B.mean(axis=1, keepdims=True)
    na = np.sqrt((A**2).sum(axis=1))
    nb = np.sqrt((B**2).sum(axis=1))
    denom = np.outer(na, nb)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.where(denom > 0, (A @ B.T) / denom, 0.0)
    return np.clip(R, -1.0, 1.0)


def match_factors(true_Z: np.ndarray, inferred_Z: np.ndarray, threshold: float = 0.70) -> MatchResult:
    """Greedy injective matching on |Pearson r|, largest first.

    Pairs whose |r| does not exceed ``threshold`` are dropped and their
    indices reported as unmatched. A negative r means the inferred factor
    should be sign-flipped.
    """
    true_Z = np.atleast_2d(true_Z)
    inferred_Z = np.atleast_2d(inferred_Z)
    if true_Z.shape[1] != inferred_Z.shape[1]:
        raise DataError("factor matrices must have the same number of observations")
    if true_Z.shape[1] < 3:
        raise DataError("need at least three observations to correlate factors")
    R = correlation_matrix(true_Z, inferred_Z)
    order = sorted(
        ((abs(R[i, j]), i, j) for i in range(R.shape[0]) for j in range(R.shape[1])),
        key=lambda x: (-x[0], x[1], x[2]),
    )
    used_t, used_i, pairs = set(), set(), []
    for a, i, j in order:
        if a <= threshold:
            break
        if i in used_t or j in used_i:
            continue
        used_t.add(i)
        used_i.add(j)
        pairs.append((i, j, float(R[i, j])))
    pairs.sort()
    return MatchResult(
        pairs,
        [i for i in range(R.shape[0]) if i not in used_t],
        [j for j in range(R.shape[1]) if j not in used_i],
    )


def factor_similarity(loadings_a: list[np.ndarray], loadings_b: list[np.ndarray]) -> np.ndarray:
    """Per-factor Pearson r over loadings concatenated across modalities.

    Each argument is a list of ``D_m x K`` loading matrices with factors
    already aligned column by column.
    """
    A = np.vstack(loadings_a)
    B = np.vstack(loadings_b)
    if A.shape != B.shape:
        raise DataError(f"loading shapes differ: {A.shape} vs {B.shape}")
    return np.array([pearson(A[:, k], B[:, k]) for k in range(A.shape[1])])
