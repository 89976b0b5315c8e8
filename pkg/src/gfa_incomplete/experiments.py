"""The synthetic-data experiment protocol.

Each restart draws its own 80/20 split and initialisation from the restart
seed, fits on the training part, and is scored on:

* multi-output prediction of each modality from the other on the test part,
  against the chance level of training means;
* prediction of the masked training entries (incomplete-data scenarios);
* noise precision recovery and factor recovery against the ground truth.

The restart with the largest final lower bound is the "best" run.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import analysis, dataset
from .baselines import gfa_median_pipeline
from .dataset import GroupedDataset
from .model import FitResult, Hyperparams, NumericalError, RestartsFailed, fit, select_best
from .synth import SynthOutput

logger = logging.getLogger(__name__)

SCENARIOS = ("complete", "missing-random", "missing-rows", "missing-tails", "missing-both")


@dataclass
class Scenario:
    """How to knock entries out of a complete synthetic dataset."""

    kind: str = "complete"
    entries_modality: int = 1
    entries_fraction: float = 0.2
    rows_modality: int = 0
    rows_fraction: float = 0.2
    tails_modality: int = 1
    n_sigma: float = 1.0
    seed: int = 12345

    def apply(self, data: GroupedDataset) -> GroupedDataset:
        if self.kind == "complete":
            return data
        if self.kind == "missing-random":
            return dataset.remove_random_entries(data, self.entries_modality, self.entries_fraction, self.seed)
        if self.kind == "missing-rows":
            return dataset.remove_random_rows(data, self.rows_modality, self.rows_fraction, self.seed)
        if self.kind == "missing-tails":
            return dataset.remove_tails(data, self.tails_modality, self.n_sigma)
        if self.kind == "missing-both":
            data = dataset.remove_random_rows(data, self.rows_modality, self.rows_fraction, self.seed)
            return dataset.remove_random_entries(data, self.entries_modality, self.entries_fraction, self.seed + 1)
        raise ValueError(f"unknown scenario {self.kind!r}; expected one of {SCENARIOS}")


@dataclass
class RestartRecord:
    seed: int
    method: str
    fit: FitResult
    train: np.ndarray
    test: np.ndarray
    metrics: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    records: list[RestartRecord]
    best: RestartRecord
    recovery: dict
    masked: GroupedDataset
    truth: SynthOutput | None
    seconds: dict = field(default_factory=dict)

    def metric_rows(self) -> list[dict]:
        return [{"seed": r.seed, "method": r.method, **r.metrics} for r in self.records]

    def summary(self) -> dict:
        keys = [k for k in self.records[0].metrics if isinstance(self.records[0].metrics[k], float)]
        out = {}
        for k in keys:
            vals = np.array([r.metrics[k] for r in self.records], dtype=float)
            if np.isnan(vals).all():
                continue
            out[k] = {"mean": float(np.nanmean(vals)), "std": float(np.nanstd(vals))}
        return out


def _restart_metrics(
    result: FitResult,
    reference: GroupedDataset,
    masked: GroupedDataset,
    train: np.ndarray,
    test: np.ndarray,
    test_sources: GroupedDataset,
) -> dict:
    """Scores for one fitted restart.

    ``reference`` holds the values errors are measured against; its masks mark
    which entries are known (all of them for synthetic ground truth).
    ``test_sources`` is what the model sees at test time.
    """
    state = result.state
    train_masked = masked.subset(train)
    ref_test = reference.subset(test)
    met: dict = {
        "final_elbo": result.final_elbo,
        "iterations": float(result.iterations),
        "converged": float(result.converged),
        "n_active": float(len(result.active_factors)),
    }
    for m in range(state.M):
        met[f"tau_mean_{m + 1}"] = float(state.E_tau(m).mean())
    M = reference.n_modalities
    for t in range(M):
        known = ref_test[t].mask
        pred = analysis.predict_modality(state, test_sources, t).values
        met[f"mse_predict_{t + 1}"] = analysis.mse(ref_test[t].values, pred, known)
        means = analysis.training_means(train_masked, t)
        met[f"chance_predict_{t + 1}"] = analysis.mse(
            ref_test[t].values, np.broadcast_to(means[:, None], pred.shape), known
        )
    # masked training entries against whatever the reference knows about them
    truths, preds = [], []
    for m in range(M):
        miss = ~train_masked[m].mask & reference[m].mask[:, train]
        if not miss.any():
            met[f"missing_r_{m + 1}"] = float("nan")
            continue
        rec = analysis.missing_prediction_matrix(state, m)
        t_vals = reference[m].values[:, train][miss]
        p_vals = rec[miss]
        met[f"missing_r_{m + 1}"] = analysis.pearson(t_vals, p_vals)
        truths.append(t_vals)
        preds.append(p_vals)
    met["missing_r"] = analysis.pearson(np.concatenate(truths), np.concatenate(preds)) if truths else float("nan")
    return met


def factor_recovery(result: FitResult, truth: SynthOutput, train: np.ndarray, rvar_threshold: float = 1e-3) -> dict:
    """Match inferred factors to the generating latents and compare their classification."""
    state = result.state
    report = analysis.factor_report(state)
    relevant = [int(k) for k in np.flatnonzero((report.rvar > rvar_threshold).any(axis=0))]
    match = analysis.match_factors(truth.true_Z[:, train], state.mu_z[relevant], threshold=0.70)
    expected = analysis.true_classification(truth.spec.alpha)
    pairs = []
    for ti, ii, r in match.pairs:
        k = relevant[ii]
        pairs.append(
            {
                "true": ti,
                "inferred": k,
                "r": r,
                "class": report.classification[k],
                "expected_class": expected[ti],
                "r_k": float(report.ratio[0, k]),
            }
        )
    return {
        "n_relevant": len(relevant),
        "relevant": relevant,
        "pairs": pairs,
        "unmatched_true": match.unmatched_true,
        "min_abs_r": min((abs(p["r"]) for p in pairs), default=0.0),
        "classification_ok": bool(pairs) and all(p["class"] == p["expected_class"] for p in pairs),
    }


def _one_restart(masked, reference, hp, s, split_fraction, method):
    t0 = time.perf_counter()
    sp = dataset.split(masked, split_fraction, seed=s)
    train = masked.subset(sp.train)
    test = masked.subset(sp.test)
    if method == "gfa":
        result = fit(train, hp, s)
        sources = test
    elif method == "median-imputation":
        result, _ = gfa_median_pipeline(train, hp, [s])
        sources = dataset.impute_median(train, test)
    else:
        raise ValueError(f"unknown method {method!r}")
    met = _restart_metrics(result, reference, masked, sp.train, sp.test, sources)
    return RestartRecord(s, method, result, sp.train, sp.test, met), time.perf_counter() - t0


def run_protocol(
    masked: GroupedDataset,
    hp: Hyperparams,
    seeds: Sequence[int],
    split_fraction: float = 0.8,
    method: str = "gfa",
    reference: GroupedDataset | None = None,
    truth: SynthOutput | None = None,
    jobs: int = 1,
    progress: Callable[[str], None] | None = None,
) -> ExperimentResult:
    """Run one method over all restarts.

    ``method`` is ``"gfa"`` (native missing-data inference) or
    ``"median-imputation"`` (fill masked entries with training medians,
    including those of the test sources, then fit as complete data).
    ``reference`` defaults to ``masked`` itself, so errors are then measured
    on observed entries only.
    """
    reference = masked if reference is None else reference
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")

    def run(s):
        try:
            return _one_restart(masked, reference, hp, s, split_fraction, method)
        except NumericalError as err:
            return err

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run, seeds))
    else:
        outcomes = [run(s) for s in seeds]
    failed = {s: o for s, o in zip(seeds, outcomes) if isinstance(o, Exception)}
    if len(failed) == len(seeds):
        raise RestartsFailed(failed)
    for s, err in failed.items():
        logger.warning("restart with seed %d failed: %s", s, err)
    records, timings = [], {}
    for rec, secs in (o for o in outcomes if not isinstance(o, Exception)):
        records.append(rec)
        timings[rec.seed] = secs
        if progress:
            progress(f"{method} seed {rec.seed}: elbo={rec.fit.final_elbo:.2f} iters={rec.fit.iterations}")
    best_fit = select_best([r.fit for r in records])
    best = next(r for r in records if r.fit is best_fit)
    recovery = factor_recovery(best.fit, truth, best.train) if truth is not None else {}
    return ExperimentResult(records, best, recovery, masked, truth, timings)


def run_synthetic(
    truth: SynthOutput,
    scenario: Scenario,
    hp: Hyperparams,
    seeds: Sequence[int],
    split_fraction: float = 0.8,
    method: str = "gfa",
    jobs: int = 1,
    progress: Callable[[str], None] | None = None,
) -> ExperimentResult:
    """Mask a synthetic dataset per ``scenario`` and score against the full ground truth."""
    masked = scenario.apply(truth.data)
    return run_protocol(masked, hp, seeds, split_fraction, method, truth.data, truth, jobs, progress)
