"""Multi-modality data containers with missingness masks.

Data are stored variables x observations (``D_m x N``) for every modality.
A mask entry of ``True`` means the value is observed. Values at masked
positions are never read by numeric code; use :meth:`ModalityMatrix.filled`
to get a copy with masked entries set to zero.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or degenerate input data."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModalityMatrix:
    """One modality: ``values`` and boolean ``mask`` of identical shape."""

    name: str
    values: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError(f"modality {self.name!r}: values must be 2-D, got {values.ndim}-D")
        mask = np.isfinite(values) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != values.shape:
            raise DataError(
                f"modality {self.name!r}: mask shape {mask.shape} != values shape {values.shape}"
            )
        # NaN/inf are only legal where masked
        mask = mask & np.isfinite(values)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", _frozen(mask))

    @property
    def n_variables(self) -> int:
        return self.values.shape[0]

    @property
    def n_observations(self) -> int:
        return self.values.shape[1]

    @property
    def complete(self) -> bool:
        return bool(self.mask.all())

    def filled(self, fill: float = 0.0) -> np.ndarray:
        """Copy of the values with masked entries replaced by ``fill``."""
        return np.where(self.mask, self.values, fill)

    def with_mask(self, mask: np.ndarray) -> "ModalityMatrix":
        return ModalityMatrix(self.name, self.values, mask)

    def with_values(self, values: np.ndarray) -> "ModalityMatrix":
        return ModalityMatrix(self.name, values, self.mask)


@dataclass(frozen=True)
class GroupedDataset:
    """Ordered collection of modalities observed on the same ``N`` observations."""

    modalities: tuple[ModalityMatrix, ...]

    def __post_init__(self):
        mods = tuple(self.modalities)
        if not mods:
            raise DataError("a dataset needs at least one modality")
        ns = {m.n_observations for m in mods}
        if len(ns) != 1:
            raise DataError(f"modalities disagree on the number of observations: {sorted(ns)}")
        names = [m.name for m in mods]
        if len(set(names)) != len(names):
            raise DataError(f"modality names must be unique, got {names}")
        object.__setattr__(self, "modalities", mods)

    @classmethod
    def from_arrays(
        cls,
        arrays: Sequence[np.ndarray],
        masks: Sequence[np.ndarray] | None = None,
        names: Sequence[str] | None = None,
    ) -> "GroupedDataset":
        names = names or [f"X{i + 1}" for i in range(len(arrays))]
        masks = masks or [None] * len(arrays)
        return cls(tuple(ModalityMatrix(n, a, m) for n, a, m in zip(names, arrays, masks)))

    @property
    def n_observations(self) -> int:
        return self.modalities[0].n_observations

    @property
    def n_modalities(self) -> int:
        return len(self.modalities)

    @property
    def dims(self) -> list[int]:
        return [m.n_variables for m in self.modalities]

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.modalities]

    @property
    def complete(self) -> bool:
        return all(m.complete for m in self.modalities)

    def __iter__(self):
        return iter(self.modalities)

    def __len__(self):
        return len(self.modalities)

    def __getitem__(self, key: int | str) -> ModalityMatrix:
        return self.modalities[self.index(key)]

    def index(self, key: int | str) -> int:
        if isinstance(key, (int, np.integer)):
            if not 0 <= key < len(self.modalities):
                raise DataError(f"modality index {key} out of range")
            return int(key)
        for i, m in enumerate(self.modalities):
            if m.name == key:
                return i
        raise DataError(f"unknown modality {key!r}; have {self.names}")

    def replace(self, key: int | str, modality: ModalityMatrix) -> "GroupedDataset":
        i = self.index(key)
        mods = list(self.modalities)
        mods[i] = modality
        return GroupedDataset(tuple(mods))

    def subset(self, columns: Iterable[int]) -> "GroupedDataset":
        """Restrict every modality to the given observation indices."""
        cols = np.asarray(list(columns), dtype=int)
        return GroupedDataset(
            tuple(ModalityMatrix(m.name, m.values[:, cols], m.mask[:, cols]) for m in self.modalities)
        )

    def fully_observed(self) -> "GroupedDataset":
        """Same values with every mask set to observed."""
        return GroupedDataset(tuple(m.with_mask(np.ones_like(m.mask)) for m in self.modalities))


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "train", _frozen(np.asarray(self.train, dtype=int)))
        object.__setattr__(self, "test", _frozen(np.asarray(self.test, dtype=int)))
        if len(self.train) == 0 or len(self.test) == 0:
            raise DataError("train and test sets must both be non-empty")
        if np.intersect1d(self.train, self.test).size:
            raise DataError("train and test indices overlap")


@dataclass(frozen=True)
class Standardization:
    """Per-variable statistics used by :func:`standardize`."""

    means: list[np.ndarray]
    stds: list[np.ndarray]

    def inverse(self, data: GroupedDataset) -> GroupedDataset:
        mods = []
        for m, mu, sd in zip(data, self.means, self.stds):
            mods.append(m.with_values(m.values * sd[:, None] + mu[:, None]))
        return GroupedDataset(tuple(mods))

    def table(self, names: Sequence[str]) -> list[dict]:
        rows = []
        for name, mu, sd in zip(names, self.means, self.stds):
            for j, (a, b) in enumerate(zip(mu, sd)):
                rows.append({"modality": name, "variable": j, "mean": float(a), "std": float(b)})
        return rows


def _observed_moments(m: ModalityMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    count = m.mask.sum(axis=1)
    x = m.filled()
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = x.sum(axis=1) / count
        dev = np.where(m.mask, m.values - mean[:, None], 0.0)
        std = np.sqrt((dev**2).sum(axis=1) / count)
    return mean, std, count


def standardize(data: GroupedDataset) -> tuple[GroupedDataset, Standardization]:
    """Zero mean, unit (population) standard deviation per variable over observed entries."""
    mods, means, stds = [], [], []
    for m in data:
        mean, std, count = _observed_moments(m)
        for j in range(m.n_variables):
            if count[j] < 2 or not std[j] > 0:
                raise DataError(f"variable {j} of modality {m.name!r} has zero variance")
        mods.append(m.with_values(np.where(m.mask, (m.values - mean[:, None]) / std[:, None], 0.0)))
        means.append(mean)
        stds.append(std)
    return GroupedDataset(tuple(mods)), Standardization(means, stds)


def residualize(data: GroupedDataset, confounds: np.ndarray) -> GroupedDataset:
    """Regress confounds (plus intercept) out of every variable.

    ``confounds`` is ``N x C`` and must be fully observed. Each variable is
    fitted by least squares over its own observed entries only. Constant
    confound columns are already spanned by the intercept and are dropped.
    """
    C = np.asarray(confounds, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    N = data.n_observations
    if C.shape[0] != N:
        raise DataError(f"confounds have {C.shape[0]} rows, expected {N}")
    if not np.isfinite(C).all():
        raise DataError("confounds must be fully observed")
    C = C[:, np.ptp(C, axis=0) > 0]
    design = np.hstack([np.ones((N, 1)), C])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise DataError("confound matrix (with intercept) is rank deficient")
    if design.shape[1] > N:
        raise DataError("more confounds than observations")

    mods = []
    for m in data:
        out = np.zeros_like(m.values)
        if m.complete:
            beta, *_ = np.linalg.lstsq(design, m.values.T, rcond=None)
            out = m.values - (design @ beta).T
        else:
            for j in range(m.n_variables):
                obs = m.mask[j]
                A = design[obs]
                if np.linalg.matrix_rank(A) < A.shape[1]:
                    raise DataError(
                        f"confounds are rank deficient over the observed entries of "
                        f"variable {j} of modality {m.name!r}"
                    )
                beta, *_ = np.linalg.lstsq(A, m.values[j, obs], rcond=None)
                out[j, obs] = m.values[j, obs] - A @ beta
        mods.append(m.with_values(out))
    return GroupedDataset(tuple(mods))


def split(data: GroupedDataset | int, fraction: float = 0.8, seed: int = 0) -> SplitIndices:
    """Random train/test split of the observations; ``|train| = round(fraction * N)``."""
    N = data if isinstance(data, (int, np.integer)) else data.n_observations
    if not 0 < fraction < 1:
        raise DataError(f"fraction must lie in (0, 1), got {fraction}")
    n_train = int(round(fraction * N))
    if n_train <= 0 or n_train >= N:
        raise DataError(f"fraction {fraction} with N={N} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(N)
    return SplitIndices(np.sort(perm[:n_train]), np.sort(perm[n_train:]))


def remove_random_entries(
    data: GroupedDataset, modality: int | str, fraction: float, seed: int
) -> GroupedDataset:
    """Mask ``round(fraction * D_m * N)`` currently observed entries of one modality."""
    if not 0 <= fraction < 1:
        raise DataError(f"fraction must lie in [0, 1), got {fraction}")
    m = data[modality]
    n_remove = int(round(fraction * m.values.size))
    observed = np.flatnonzero(m.mask)
    if n_remove > observed.size:
        raise DataError(f"cannot remove {n_remove} entries, only {observed.size} observed")
    rng = np.random.default_rng(seed)
    drop = rng.choice(observed, size=n_remove, replace=False)
    mask = m.mask.copy().ravel()
    mask[drop] = False
    return data.replace(modality, m.with_mask(mask.reshape(m.mask.shape)))


def remove_random_rows(
    data: GroupedDataset, modality: int | str, fraction: float, seed: int
) -> GroupedDataset:
    """Mask whole observations (all variables of one modality) at random.

    "Rows" here are observations, i.e. columns of the ``D_m x N`` matrix.
    """
    if not 0 <= fraction < 1:
        raise DataError(f"fraction must lie in [0, 1), got {fraction}")
    m = data[modality]
    N = m.n_observations
    n_remove = int(round(fraction * N))
    rng = np.random.default_rng(seed)
    drop = rng.choice(N, size=n_remove, replace=False)
    mask = m.mask.copy()
    mask[:, drop] = False
    return data.replace(modality, m.with_mask(mask))


def remove_tails(data: GroupedDataset, modality: int | str, n_sigma: float = 1.0) -> GroupedDataset:
    """Mask entries further than ``n_sigma`` standard deviations from their variable mean."""
    m = data[modality]
    if np.isinf(n_sigma):
        return data
    mean, std, _ = _observed_moments(m)
    dev = np.abs(np.where(m.mask, m.values - mean[:, None], 0.0))
    keep = m.mask & ~(dev > n_sigma * std[:, None])
    return data.replace(modality, m.with_mask(keep))


def medians(data: GroupedDataset) -> list[np.ndarray]:
    """Per-variable medians over observed entries (even counts average the middle pair)."""
    out = []
    for m in data:
        med = np.empty(m.n_variables)
        for j in range(m.n_variables):
            obs = m.values[j, m.mask[j]]
            if obs.size == 0:
                raise DataError(f"variable {j} of modality {m.name!r} has no observed entries")
            med[j] = np.median(obs)
        out.append(med)
    return out


def impute_median(train: GroupedDataset, target: GroupedDataset) -> GroupedDataset:
    """Fill masked entries of ``target`` with the training medians; all masks become observed."""
    if train.dims != target.dims:
        raise DataError(f"dimension mismatch: {train.dims} vs {target.dims}")
    meds = medians(train)
    mods = []
    for m, med in zip(target, meds):
        vals = np.where(m.mask, m.values, med[:, None])
        mods.append(ModalityMatrix(m.name, vals, np.ones_like(m.mask)))
    return GroupedDataset(tuple(mods))


# -- on-disk format ---------------------------------------------------------
#
# A manifest (JSON) lists modalities:
#   {"modalities": [{"name": "X1", "values": "X1.csv", "mask": "X1_mask.csv"}, ...]}
# Values files are comma-delimited, rows = variables, columns = observations.
# The mask sidecar is optional; "nan" tokens in the values file also mark
# missing entries.

MANIFEST_NAME = "dataset.json"


def save_dataset(data: GroupedDataset, directory: str | os.PathLike, fill_masked: bool = True) -> Path:
    """Write ``data`` in the manifest + delimited-text format; returns the manifest path.

    Masked entries are written as ``nan`` unless ``fill_masked`` is false, in
    which case stored values are kept and only the mask file records missingness.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for m in data:
        vfile, mfile = f"{m.name}.csv", f"{m.name}_mask.csv"
        vals = np.where(m.mask, m.values, np.nan) if fill_masked else m.values
        np.savetxt(d / vfile, vals, delimiter=",", fmt="%.17g")
        np.savetxt(d / mfile, m.mask.astype(int), delimiter=",", fmt="%d")
        entries.append({"name": m.name, "values": vfile, "mask": mfile})
    path = d / MANIFEST_NAME
    path.write_text(json.dumps({"modalities": entries}, indent=2))
    return path


def _read_matrix(path: Path) -> np.ndarray:
    a = np.loadtxt(path, delimiter=",", ndmin=2)
    return a


def load_dataset(path: str | os.PathLike) -> GroupedDataset:
    """Read a dataset from a manifest file (or a directory containing one)."""
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    spec = json.loads(p.read_text())
    mods = []
    for e in spec["modalities"]:
        values = _read_matrix(p.parent / e["values"])
        mask = np.isfinite(values)
        if e.get("mask"):
            file_mask = _read_matrix(p.parent / e["mask"]).astype(bool)
            if file_mask.shape != values.shape:
                raise DataError(f"mask file for {e['name']!r} has shape {file_mask.shape}")
            mask &= file_mask
        mods.append(ModalityMatrix(e["name"], values, mask))
    return GroupedDataset(tuple(mods))
