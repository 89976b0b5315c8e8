"""Config-driven experiment runs.

A run reads one YAML/JSON config, does the work its ``kind`` asks for and
writes a ``manifest.json`` plus delimited tables into its output directory::

    gfa-incomplete synth --config run.yaml --out runs/complete --jobs 4
    gfa-incomplete report runs/complete/manifest.json
    gfa-incomplete compare runs/complete/manifest.json runs/masked/manifest.json

Exit codes: 0 success, 1 bad config or input, 2 numerical failure,
3 best restart hit ``max_iters`` without converging (outputs still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from . import analysis, dataset, persist
from .baselines import cca_fit, cca_permutation_test
from .dataset import DataError, GroupedDataset
from .experiments import SCENARIOS, Scenario, run_protocol
from .model import FitResult, Hyperparams, NumericalError
from .persist import RunManifest
from .synth import SynthOutput, SynthSpec, generate, load_synth, reference_spec, save_synth

logger = logging.getLogger(__name__)

OUT_ENV = "GFA_INCOMPLETE_OUT"
MANIFEST = "manifest.json"

SYNTH_KINDS = {
    "synth-complete": "complete",
    "synth-missing-random": "missing-random",
    "synth-missing-rows": "missing-rows",
    "synth-missing-tails": "missing-tails",
}
KINDS = (*SYNTH_KINDS, "fit-external", "predict", "baseline-cca", "baseline-median", "report")
VERB_KINDS = {
    "synth": tuple(SYNTH_KINDS),
    "fit": ("fit-external",),
    "predict": ("predict",),
    "baseline": ("baseline-median", "baseline-cca"),
    "report": ("report",),
}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_NOT_CONVERGED = 0, 1, 2, 3
STATUS_EXIT = {"ok": EXIT_OK, "not-converged": EXIT_NOT_CONVERGED, "failed": EXIT_NUMERICAL}

# predictions are written as long tables only up to this many entries per modality
MAX_SCATTER_ENTRIES = 200_000


class ConfigError(ValueError):
    pass


def tool_version() -> str:
    try:
        return metadata.version("gfa-incomplete")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# -- config -------------------------------------------------------------------------


@dataclass
class CcaConfig:
    K: int = 4
    n_perms: int = 1000
    n_components: int | None = None
    seed: int = 0


def _build(cls, d, what):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"{what} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown {what} keys: {unknown}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid {what}: {err}") from err


@dataclass
class RunConfig:
    """One run. Every default reproduces the synthetic setup of the method's evaluation."""

    kind: str
    dataset: str | None = None
    synth: SynthSpec | None = None
    scenario: Scenario = field(default_factory=Scenario)
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    split_fraction: float = 0.8
    seeds: list[int] | None = None
    seed_base: int = 0
    jobs: int = 1
    output_dir: str | None = None
    standardize: bool = False
    confounds: str | None = None
    fit_dir: str | None = None
    target: str | None = None
    manifest: str | None = None
    cca: CcaConfig = field(default_factory=CcaConfig)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {list(KINDS)}")
        if self.kind in SYNTH_KINDS:
            if self.dataset is not None:
                raise ConfigError(f"{self.kind} generates its own data; drop 'dataset' or use fit-external")
            expected = SYNTH_KINDS[self.kind]
            if self.scenario.kind not in ("complete", expected):
                raise ConfigError(f"scenario kind {self.scenario.kind!r} contradicts {self.kind}")
            self.scenario = dataclasses.replace(self.scenario, kind=expected)
        if self.scenario.kind not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario.kind!r}")
        if self.kind == "fit-external" and not self.dataset:
            raise ConfigError("fit-external needs 'dataset' (path to a dataset manifest or directory)")
        if self.kind == "predict" and not self.fit_dir:
            raise ConfigError("predict needs 'fit_dir' (a run directory or saved fit)")
        if self.kind == "report" and not self.manifest:
            raise ConfigError("report needs 'manifest'")
        if self.dataset is not None and self.synth is not None:
            raise ConfigError("give either 'dataset' or 'synth', not both")
        if not 0 < self.split_fraction < 1:
            raise ConfigError("split_fraction must lie in (0, 1)")
        if self.seeds is not None:
            if not self.seeds:
                raise ConfigError("seeds must be non-empty")
            self.seeds = [int(s) for s in self.seeds]
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")

    def restart_seeds(self) -> list[int]:
        base = list(range(self.hyperparams.restarts)) if self.seeds is None else self.seeds
        return [self.seed_base + s for s in base]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if "kind" not in d:
            raise ConfigError("config needs a 'kind'")
        if d.get("synth") is not None:
            if not isinstance(d["synth"], dict):
                raise ConfigError("synth must be a mapping")
            try:
                d["synth"] = SynthSpec.from_dict(d["synth"])
            except (TypeError, ValueError) as err:
                raise ConfigError(f"invalid synth: {err}") from err
        d["scenario"] = _build(Scenario, d.get("scenario"), "scenario")
        d["hyperparams"] = _build(Hyperparams, d.get("hyperparams"), "hyperparams")
        d["cca"] = _build(CcaConfig, d.get("cca"), "cca")
        try:
            return cls(**d)
        except TypeError as err:
            raise ConfigError(str(err)) from err

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        out["synth"] = self.synth.to_dict() if self.synth is not None else None
        out["scenario"] = dataclasses.asdict(self.scenario)
        out["hyperparams"] = self.hyperparams.to_dict()
        out["cca"] = dataclasses.asdict(self.cca)
        return persist.clean(out)


def load_config(path: str | os.PathLike) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse config {path}: {err}") from err
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    return d


# -- data sources ----------------------------------------------------------------------


@dataclass
class Source:
    masked: GroupedDataset  # what the model sees
    reference: GroupedDataset  # what errors are measured against
    truth: SynthOutput | None


def _load_source(cfg: RunConfig) -> Source:
    if cfg.dataset is not None:
        path = Path(cfg.dataset)
        if not path.exists():
            raise ConfigError(f"dataset {path} does not exist")
        data = dataset.load_dataset(path)
        truth = None
        root = path if path.is_dir() else path.parent
        if (root / "truth" / "spec.json").exists():
            truth = load_synth(root)
        if cfg.confounds:
            data = dataset.residualize(data, np.loadtxt(cfg.confounds, delimiter=",", ndmin=2))
        if cfg.standardize:
            data, _ = dataset.standardize(data)
        masked = cfg.scenario.apply(data)
        return Source(masked, data, truth)
    truth = generate(cfg.synth if cfg.synth is not None else reference_spec())
    return Source(cfg.scenario.apply(truth.data), truth.data, truth)


# -- tables ---------------------------------------------------------------------------


def _metric_rows(restarts: list[dict], summary: dict) -> tuple[list[dict], list[str]]:
    """Per-restart rows, then mean and std rows; metric columns in sorted order."""
    keys = sorted({k for r in restarts for k in r["metrics"]})
    rows = [{"seed": r["seed"], "method": r["method"], **r["metrics"]} for r in restarts]
    if summary and restarts:
        method = restarts[0]["method"]
        for stat in ("mean", "std"):
            rows.append({"seed": stat, "method": method, **{k: v[stat] for k, v in summary.items()}})
    return rows, ["seed", "method", *keys]


def _write_fit_tables(out: Path, manifest: RunManifest, best: FitResult, names: list[str]) -> dict:
    """Tables derived from the manifest and the best fit alone, so ``report`` can rebuild them."""
    tables = {}
    trace_rows = [
        {"seed": r["seed"], "method": r["method"], "iteration": i + 1, "elbo": v}
        for r in manifest.restarts
        for i, v in enumerate(r["elbo_trace"])
    ]
    tables["elbo_trace"] = persist.write_table(trace_rows, out / "elbo_trace.csv", ["seed", "method", "iteration", "elbo"]).name
    rows, columns = _metric_rows(manifest.restarts, manifest.summary)
    tables["metrics"] = persist.write_table(rows, out / "metrics.csv", columns).name
    header = [f"factor_{k}" for k in range(best.state.K)]
    for m, W in enumerate(best.state.mu_w):
        tables[f"loadings_m{m + 1}"] = persist.write_matrix(W, out / f"loadings_m{m + 1}.csv", header).name
    report = analysis.factor_report(best.state, names)
    tables["factor_report"] = persist.write_table(
        report.rows(names),
        out / "factor_report.csv",
        ["factor", "modality", "rvar", "var", "r_k", "class", "most_relevant"],
    ).name
    if manifest.recovery.get("pairs") is not None:
        tables["recovery"] = persist.write_table(
            manifest.recovery["pairs"],
            out / "recovery.csv",
            ["true", "inferred", "r", "class", "expected_class", "r_k"],
        ).name
    return tables


@dataclass
class _Best:
    fit: FitResult
    train: np.ndarray
    test: np.ndarray
    method: str


def _write_scatter(out: Path, best_record, source: Source, names: list[str]) -> dict:
    """Test-set (truth, prediction) pairs of the best restart, one long table per target."""
    tables = {}
    test = best_record.test
    sources = source.masked.subset(test)
    if best_record.method == "median-imputation":
        sources = dataset.impute_median(source.masked.subset(best_record.train), sources)
    ref = source.reference.subset(test)
    for t, name in enumerate(names):
        known = ref[t].mask
        if known.sum() > MAX_SCATTER_ENTRIES:
            logger.info("skipping prediction scatter for %s (%d entries)", name, known.sum())
            continue
        pred = analysis.predict_modality(best_record.fit.state, sources, t).values
        rows_j, cols_n = np.nonzero(known)
        rows = [
            {"variable": int(j), "observation": int(test[n]), "truth": float(ref[t].values[j, n]), "prediction": float(pred[j, n])}
            for j, n in zip(rows_j, cols_n)
        ]
        tables[f"predictions_{name}"] = persist.write_table(
            rows, out / f"predictions_{name}.csv", ["variable", "observation", "truth", "prediction"]
        ).name
    return tables


# -- kinds -----------------------------------------------------------------------------


def _manifest(cfg: RunConfig) -> RunManifest:
    return RunManifest(kind=cfg.kind, config=cfg.to_dict(), version=tool_version())


def _finish(manifest: RunManifest, out: Path, t0: float) -> RunManifest:
    manifest.seconds = {**manifest.seconds, "total": time.perf_counter() - t0}
    manifest.save(out / MANIFEST)
    missing = manifest.missing_files(out)
    if missing:
        raise OSError(f"run finished but artifacts are missing: {missing}")
    return manifest


def _run_protocol_kind(cfg: RunConfig, out: Path, t0: float) -> RunManifest:
    manifest = _manifest(cfg)
    source = _load_source(cfg)
    names = source.masked.names
    data_dir = out / "data"
    if source.truth is not None:
        save_synth(SynthOutput(source.masked, source.truth.true_W, source.truth.true_Z, source.truth.spec), data_dir)
    else:
        dataset.save_dataset(source.masked, data_dir)
    manifest.artifacts["data"] = "data/" + dataset.MANIFEST_NAME
    if source.reference is not source.masked:
        # values behind the mask, needed to score and to rebuild the prediction tables
        dataset.save_dataset(source.reference, data_dir / "reference")
        manifest.artifacts["reference"] = "data/reference/" + dataset.MANIFEST_NAME
    method = "median-imputation" if cfg.kind == "baseline-median" else "gfa"
    try:
        result = run_protocol(
            source.masked,
            cfg.hyperparams,
            cfg.restart_seeds(),
            cfg.split_fraction,
            method,
            source.reference,
            source.truth,
            cfg.jobs,
            logger.info,
        )
    except NumericalError as err:
        manifest.status = "failed"
        manifest.failure = {"stage": "fit", "message": str(err)}
        return _finish(manifest, out, t0)
    manifest.restarts = [
        {
            "seed": r.seed,
            "method": r.method,
            "final_elbo": r.fit.final_elbo,
            "iterations": r.fit.iterations,
            "converged": r.fit.converged,
            "n_train": len(r.train),
            "metrics": r.metrics,
            "elbo_trace": r.fit.elbo_trace,
        }
        for r in result.records
    ]
    manifest.summary = result.summary()
    manifest.recovery = result.recovery
    manifest.seconds = {"restarts": {str(k): v for k, v in result.seconds.items()}}
    persist.save_fit(result.best.fit, out / "best_fit", names)
    manifest.best = {"seed": result.best.seed, "method": method, "fit_dir": "best_fit"}
    manifest.artifacts["best_fit"] = "best_fit/" + persist.FIT_DOC
    manifest.tables = _write_fit_tables(out, manifest, result.best.fit, names)
    manifest.tables.update(_write_scatter(out, result.best, source, names))
    if not result.best.fit.converged:
        manifest.status = "not-converged"
    return _finish(manifest, out, t0)


def _resolve_fit_dir(path: Path) -> tuple[Path, Path | None]:
    """A saved fit directory, or a run directory/manifest pointing at one. Also returns the run root."""
    if path.is_file():
        path = path.parent
    if (path / persist.FIT_DOC).exists():
        return path, None
    if (path / MANIFEST).exists():
        m = RunManifest.load(path / MANIFEST)
        if not m.best.get("fit_dir"):
            raise ConfigError(f"run {path} has no saved best fit")
        return path / m.best["fit_dir"], path
    raise ConfigError(f"{path} holds neither a fit nor a run manifest")


def _run_predict(cfg: RunConfig, out: Path, t0: float) -> RunManifest:
    manifest = _manifest(cfg)
    fit_dir, run_root = _resolve_fit_dir(Path(cfg.fit_dir))
    fitted, names = persist.load_fit(fit_dir)
    if cfg.dataset is not None:
        data = dataset.load_dataset(cfg.dataset)
    elif run_root is not None and (run_root / "data").exists():
        data = dataset.load_dataset(run_root / "data")
    else:
        raise ConfigError("predict needs 'dataset' when fit_dir is not a run directory")
    if data.dims != fitted.state.dims:
        raise ConfigError(f"dataset dims {data.dims} do not match the fit {fitted.state.dims}")
    targets = [cfg.target] if cfg.target is not None else data.names
    rows = []
    for target in targets:
        t = data.index(target)
        pred = analysis.predict_modality(fitted.state, data, t)
        name = data.names[t]
        manifest.tables[f"predictions_{name}"] = persist.write_matrix(pred.values, out / f"predictions_{name}.csv").name
        known = data[t].mask
        rows.append(
            {
                "target": name,
                "mse_observed": analysis.mse(data[t].values, pred.values, known) if known.any() else float("nan"),
                "n_observed": int(known.sum()),
                "n_unsupported": int(pred.unsupported.sum()),
            }
        )
    manifest.tables["metrics"] = persist.write_table(rows, out / "metrics.csv").name
    manifest.best = {"fit_dir": os.path.relpath(fit_dir, out)}
    return _finish(manifest, out, t0)


def _run_cca(cfg: RunConfig, out: Path, t0: float) -> RunManifest:
    manifest = _manifest(cfg)
    source = _load_source(cfg)
    data = source.masked
    if data.n_modalities != 2:
        raise ConfigError("CCA needs exactly two modalities")
    if not data.complete:
        logger.info("median-imputing masked entries before CCA")
        data = dataset.impute_median(data, data)
    X1, X2 = data[0].values, data[1].values
    c = cfg.cca
    res = cca_fit(X1, X2, c.K, c.n_components)
    test = cca_permutation_test(X1, X2, c.K, c.n_perms, cfg.seed_base + c.seed, c.n_components, cfg.jobs)
    matched = {}
    if source.truth is not None:
        match = analysis.match_factors(source.truth.true_Z, res.averaged_latents, threshold=0.70)
        matched = {i: (t, r) for t, i, r in match.pairs}
    rows = []
    for k in range(c.K):
        t, r = matched.get(k, (None, float("nan")))
        rows.append(
            {
                "mode": k,
                "canonical_correlation": float(res.canonical_correlations[k]),
                "p_value": float(test.p_values[k]),
                "true_factor": t,
                "r_true": r,
            }
        )
    manifest.tables["metrics"] = persist.write_table(rows, out / "metrics.csv").name
    manifest.tables["loadings_m1"] = persist.write_matrix(res.U, out / "loadings_m1.csv").name
    manifest.tables["loadings_m2"] = persist.write_matrix(res.V, out / "loadings_m2.csv").name
    manifest.artifacts["cca"] = persist.write_json({"cca": res.to_dict(), "permutation_test": test.to_dict()}, out / "cca.json").name
    manifest.summary = {"canonical_correlations": res.canonical_correlations, "p_values": test.p_values}
    return _finish(manifest, out, t0)


def _run_report(cfg: RunConfig, out: Path, t0: float) -> RunManifest:
    src_path = Path(cfg.manifest)
    if src_path.is_dir():
        src_path = src_path / MANIFEST
    if not src_path.exists():
        raise ConfigError(f"manifest {src_path} does not exist")
    src = RunManifest.load(src_path)
    if not src.best.get("fit_dir") or not src.restarts:
        raise ConfigError(f"{src_path} is not a fitted run; nothing to report")
    root = src_path.parent
    fitted, names = persist.load_fit(root / src.best["fit_dir"])
    new = RunManifest(**src.to_dict())
    new.artifacts = {k: os.path.relpath(root / v, out) for k, v in src.artifacts.items()}
    new.best = {**src.best, "fit_dir": os.path.relpath(root / src.best["fit_dir"], out)}
    new.tables = _write_fit_tables(out, new, fitted, names)
    if "data" in src.artifacts:
        masked = dataset.load_dataset((root / src.artifacts["data"]).parent)
        ref_doc = src.artifacts.get("reference")
        reference = dataset.load_dataset((root / ref_doc).parent) if ref_doc else masked
        sp = dataset.split(masked, src.config.get("split_fraction", 0.8), seed=src.best["seed"])
        best = _Best(fitted, sp.train, sp.test, src.best.get("method", "gfa"))
        new.tables.update(_write_scatter(out, best, Source(masked, reference, None), names))
    new.save(out / MANIFEST)
    return new


def run(cfg: RunConfig, out: str | os.PathLike) -> RunManifest:
    """Execute one config; everything goes to ``out``, which the run owns."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if cfg.kind in SYNTH_KINDS or cfg.kind in ("fit-external", "baseline-median"):
        return _run_protocol_kind(cfg, out, t0)
    if cfg.kind == "predict":
        return _run_predict(cfg, out, t0)
    if cfg.kind == "baseline-cca":
        return _run_cca(cfg, out, t0)
    return _run_report(cfg, out, t0)


# -- cross-run comparison -------------------------------------------------------------


def compare(manifest_a: str | os.PathLike, manifest_b: str | os.PathLike) -> dict:
    """Loading similarity of the most relevant factors of two runs' best fits.

    Factors are paired greedily by |r| of their loadings concatenated over
    modalities (threshold 0.70), signs aligned, then scored with
    :func:`analysis.factor_similarity`. Factors without a partner are listed
    separately.
    """
    fits = []
    for p in (manifest_a, manifest_b):
        fit_dir, _ = _resolve_fit_dir(Path(p))
        fits.append(persist.load_fit(fit_dir)[0])
    a, b = fits
    if a.state.dims != b.state.dims:
        raise ConfigError(f"runs have different dims: {a.state.dims} vs {b.state.dims}")
    rel_a = analysis.factor_report(a.state).most_relevant
    rel_b = analysis.factor_report(b.state).most_relevant
    La = [w[:, rel_a] for w in a.state.mu_w]
    Lb = [w[:, rel_b] for w in b.state.mu_w]
    pairs = []
    unmatched_a, unmatched_b = list(rel_a), list(rel_b)
    if rel_a and rel_b:
        match = analysis.match_factors(np.vstack(La).T, np.vstack(Lb).T, threshold=0.70)
        ia = [i for i, _, _ in match.pairs]
        ib = [j for _, j, _ in match.pairs]
        signs = np.array([1.0 if r >= 0 else -1.0 for _, _, r in match.pairs])
        sim = analysis.factor_similarity([w[:, ia] for w in La], [w[:, ib] * signs for w in Lb])
        pairs = [{"factor_a": rel_a[i], "factor_b": rel_b[j], "r": float(r)} for i, j, r in zip(ia, ib, sim)]
        unmatched_a = [rel_a[i] for i in match.unmatched_true]
        unmatched_b = [rel_b[j] for j in match.unmatched_inferred]
    if not pairs:
        logger.warning("no most-relevant factors could be paired between the runs")
    elif unmatched_a or unmatched_b:
        logger.warning("unpaired factors: run a %s, run b %s", unmatched_a, unmatched_b)
    return {"pairs": pairs, "unmatched_a": unmatched_a, "unmatched_b": unmatched_b}


# -- entry point ---------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gfa-incomplete", description="Group factor analysis with missing data")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, kinds in VERB_KINDS.items():
        s = sub.add_parser(verb, help=f"run kinds: {', '.join(kinds)}")
        s.add_argument("--config", help="YAML or JSON run config")
        s.add_argument("--kind", choices=kinds, help="run kind when the config does not give one")
        s.add_argument("--seed-base", type=int, help="offset added to every restart seed")
        s.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
        s.add_argument("--jobs", type=int, help="parallel restarts / permutation replicates")
        if verb == "report":
            s.add_argument("manifest", nargs="?", help="manifest.json (or its run directory)")
    c = sub.add_parser("compare", help="factor similarity between two runs")
    c.add_argument("manifest_a")
    c.add_argument("manifest_b")
    c.add_argument("--out", help="directory for similarity.csv")
    return p


def _output_dir(args, cfg: RunConfig | None, default: str) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(default)


def _config_from_args(args) -> RunConfig:
    raw = load_config(args.config) if args.config else {}
    kinds = VERB_KINDS[args.verb]
    if args.kind:
        if raw.get("kind", args.kind) != args.kind:
            raise ConfigError(f"--kind {args.kind} contradicts config kind {raw['kind']!r}")
        raw["kind"] = args.kind
    raw.setdefault("kind", kinds[0])
    if raw["kind"] not in kinds:
        raise ConfigError(f"verb {args.verb!r} runs {list(kinds)}, not {raw['kind']!r}")
    if args.verb == "report" and args.manifest:
        raw["manifest"] = args.manifest
    if args.seed_base is not None:
        raw["seed_base"] = args.seed_base
    if args.jobs is not None:
        raw["jobs"] = args.jobs
    return RunConfig.from_dict(raw)


def _error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "compare":
            table = compare(args.manifest_a, args.manifest_b)
            out = _output_dir(args, None, "runs/compare")
            out.mkdir(parents=True, exist_ok=True)
            persist.write_table(table["pairs"], out / "similarity.csv", ["factor_a", "factor_b", "r"])
            persist.write_json(table, out / "compare.json")
            print(json.dumps(table, indent=2))
            return EXIT_OK
        cfg = _config_from_args(args)
        if cfg.kind == "report" and not (args.out or os.environ.get(OUT_ENV) or cfg.output_dir):
            m = Path(cfg.manifest)
            out = m if m.is_dir() else m.parent
        else:
            out = _output_dir(args, cfg, f"runs/{cfg.kind}")
        manifest = run(cfg, out)
    except (ConfigError, DataError, FileNotFoundError) as err:
        _error("config", str(err))
        return EXIT_CONFIG
    except NumericalError as err:
        _error("numerical", str(err))
        return EXIT_NUMERICAL
    if manifest.status == "failed":
        _error("numerical", manifest.failure.get("message", ""))
    print(json.dumps({"status": manifest.status, "output_dir": str(out), "summary": manifest.summary}, indent=2))
    return STATUS_EXIT[manifest.status]


if __name__ == "__main__":
    sys.exit(main())
