"""Reading and writing fits, tables and run manifests.

Everything is plain text: JSON trees for structure and comma-delimited files
for matrices. Floats are written with 17 significant digits, so a save/load
cycle reproduces every array bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .model import FitResult, Hyperparams, VariationalState

FIT_DOC = "fit.json"


def clean(obj: Any) -> Any:
    """Convert numpy scalars/arrays, tuples and NaN into a JSON-safe tree.

    NaN and infinities become ``None`` so that a tree compares equal to its
    own JSON round trip.
    """
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_json(obj: Any, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_text(json.dumps(clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def read_json(path: str | os.PathLike) -> Any:
    return json.loads(Path(path).read_text())


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return "nan" if math.isnan(f) else repr(f)
    if v is None:
        return ""
    return str(v)


def write_table(rows: Iterable[dict], path: str | os.PathLike, columns: list[str] | None = None) -> Path:
    """Delimited table with a header row; columns default to first-seen key order."""
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])
    return path


def read_table(path: str | os.PathLike) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_matrix(a: np.ndarray, path: str | os.PathLike, header: list[str] | None = None) -> Path:
    path = Path(path)
    a = np.atleast_2d(np.asarray(a, float))
    np.savetxt(path, a, delimiter=",", fmt="%.17g", header=",".join(header) if header else "", comments="")
    return path


def read_matrix(path: str | os.PathLike, header: bool = False) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1 if header else 0)


# -- fits -----------------------------------------------------------------------


def save_fit(result: FitResult, directory: str | os.PathLike, names: list[str] | None = None) -> Path:
    """Write a fit as ``fit.json`` plus one delimited file per posterior matrix.

    Covariances are stored flattened, one ``K*K`` row per observation or
    variable. Log-determinants are recomputed on load.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    s = result.state
    K = s.K
    names = names or [f"X{m + 1}" for m in range(s.M)]
    write_matrix(s.mu_z, d / "mu_z.csv")
    write_matrix(s.sigma_z.reshape(s.N, K * K), d / "sigma_z.csv")
    mods = []
    for m, name in enumerate(names):
        files = {
            "mu_w": f"mu_w_{name}.csv",
            "sigma_w": f"sigma_w_{name}.csv",
            "tau": f"tau_{name}.csv",
        }
        write_matrix(s.mu_w[m], d / files["mu_w"])
        write_matrix(s.sigma_w[m].reshape(-1, K * K), d / files["sigma_w"])
        write_matrix(np.column_stack([s.tau_a[m], s.tau_b[m]]), d / files["tau"], ["a", "b"])
        mods.append(
            {
                "name": name,
                "dim": s.dims[m],
                "files": files,
                "alpha_a": float(s.alpha_a[m]),
                "alpha_b": s.alpha_b[m],
                "E_alpha": s.E_alpha(m),
                "mean_E_tau": float(s.E_tau(m).mean()),
            }
        )
    doc = {
        "tag": result.tag,
        "seed": result.seed,
        "converged": result.converged,
        "iterations": result.iterations,
        "final_elbo": result.final_elbo,
        "elbo_trace": result.elbo_trace,
        "active_factors": result.active_factors,
        "hyperparams": result.hp.to_dict(),
        "K": K,
        "N": s.N,
        "modalities": mods,
    }
    return write_json(doc, d / FIT_DOC)


def _logdets(sigma: np.ndarray) -> np.ndarray:
    return np.linalg.slogdet(sigma)[1]


def load_fit(directory: str | os.PathLike) -> tuple[FitResult, list[str]]:
    """Inverse of :func:`save_fit`; returns the fit and the modality names."""
    d = Path(directory)
    doc = read_json(d / FIT_DOC)
    K, N = doc["K"], doc["N"]
    hp = Hyperparams(**doc["hyperparams"])
    mu_z = read_matrix(d / "mu_z.csv").reshape(K, N)
    sigma_z = read_matrix(d / "sigma_z.csv").reshape(N, K, K)
    mu_w, sigma_w, tau_a, tau_b, alpha_a, alpha_b = [], [], [], [], [], []
    for mod in doc["modalities"]:
        D = mod["dim"]
        mu_w.append(read_matrix(d / mod["files"]["mu_w"]).reshape(D, K))
        sigma_w.append(read_matrix(d / mod["files"]["sigma_w"]).reshape(D, K, K))
        tau = read_matrix(d / mod["files"]["tau"], header=True).reshape(D, 2)
        tau_a.append(tau[:, 0].copy())
        tau_b.append(tau[:, 1].copy())
        alpha_a.append(float(mod["alpha_a"]))
        alpha_b.append(np.asarray(mod["alpha_b"], float))
    state = VariationalState(
        mu_z,
        sigma_z,
        _logdets(sigma_z),
        mu_w,
        sigma_w,
        [_logdets(s) for s in sigma_w],
        alpha_a,
        alpha_b,
        tau_a,
        tau_b,
        hp,
    )
    result = FitResult(
        state=state,
        elbo_trace=np.asarray(doc["elbo_trace"], float),
        converged=bool(doc["converged"]),
        iterations=int(doc["iterations"]),
        seed=int(doc["seed"]),
        active_factors=list(doc["active_factors"]),
        hp=hp,
        tag=doc["tag"],
    )
    return result, [m["name"] for m in doc["modalities"]]


# -- run manifests ------------------------------------------------------------------


@dataclass
class RunManifest:
    """What a run did and where its outputs live (paths relative to the manifest)."""

    kind: str
    config: dict
    version: str
    status: str = "ok"  # ok | not-converged | failed
    restarts: list[dict] = field(default_factory=list)
    best: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    recovery: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    seconds: dict = field(default_factory=dict)
    failure: dict = field(default_factory=dict)

    def __setattr__(self, name, value):
        # keep every field JSON-safe so that parse(serialize(m)) == m
        super().__setattr__(name, clean(value))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config,
            "version": self.version,
            "status": self.status,
            "restarts": self.restarts,
            "best": self.best,
            "summary": self.summary,
            "recovery": self.recovery,
            "tables": self.tables,
            "artifacts": self.artifacts,
            "seconds": self.seconds,
            "failure": self.failure,
        }

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def parse(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def save(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.write_text(self.serialize())
        return path

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunManifest":
        return cls.parse(Path(path).read_text())

    def missing_files(self, root: str | os.PathLike) -> list[str]:
        root = Path(root)
        refs = list(self.tables.values()) + list(self.artifacts.values())
        return [r for r in refs if not (root / r).exists()]
