"""Batch pipeline: load or generate data, inject missingness, train the
reference model, sample and score every algorithm on every incomplete row,
aggregate ranks, and write reports.

Per-row randomness comes from streams derived from the master seed and the
row/algorithm identity, so reports are byte-identical across runs and across
worker counts.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy
import sklearn

from . import __version__
from .data import (
    Dataset,
    GroundTruth,
    MissingPattern,
    PatternCatalog,
    SyntheticSpec,
    extract_patterns,
    generate_synthetic,
    inject_mcar,
    load_csv,
    split_rows,
)
from .errors import ConfigError, ImputeRankError, PipelineError, UnsupportedError
from .imputers import Imputer, build_imputer
from .metrics import METRICS, KernelConfig, KlSolverConfig, MetricScore, NdsConfig, SampleSet, compute_score
from .mrf import GibbsConfig, MrfParams, TrainConfig, gibbs_sample, train_per_pattern, train_single_model
from .ranking import RankMatrix, RankingResult, aggregate, scores_to_ranks
from .rng import derive_seed

REPORT_FILES = ("ranking.json", "ranks.csv", "scores.csv", "run_manifest.json")


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    """One evaluation run; mirrors the JSON config document."""

    input: object  # path str or SyntheticSpec
    algorithms: tuple[AlgorithmSpec, ...]
    metrics: tuple[str, ...] = METRICS
    missing_rate: float = 0.0
    model: str = "per_pattern"
    num_samples: int = 25
    beta: float = 0.05
    seed: int = 0
    output_dir: str = "out"
    train_on: str = "d_n"
    workers: int = 1
    train: TrainConfig = TrainConfig()
    gibbs_burn_in: int = 100
    gibbs_thin: int = 10
    kernel: KernelConfig = KernelConfig()
    kl: KlSolverConfig = KlSolverConfig()
    nds: NdsConfig = NdsConfig()

    def __post_init__(self):
        if not self.metrics:
            raise ConfigError("metrics must be nonempty")
        unknown = [m for m in self.metrics if m not in METRICS]
        if unknown:
            raise ConfigError(f"unknown metrics {unknown}; expected subset of {METRICS}")
        if len(self.algorithms) < 2:
            raise ConfigError("at least 2 algorithms required")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise ConfigError("algorithm names must be unique")
        if self.num_samples < 1:
            raise ConfigError("L must be >= 1")
        if not 0.0 <= self.missing_rate <= 0.5:
            raise ConfigError("missing_rate must be in [0, 0.5]")
        if self.model not in ("per_pattern", "single"):
            raise ConfigError("model must be 'per_pattern' or 'single'")
        if self.train_on not in ("d_n", "full_pre_injection"):
            raise ConfigError("train_on must be 'd_n' or 'full_pre_injection'")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError("beta must be in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        try:
            input_doc = doc["input"]
            if isinstance(input_doc, dict) and "synthetic" in input_doc:
                source = SyntheticSpec.from_json(input_doc["synthetic"])
            elif isinstance(input_doc, dict) and "csv" in input_doc:
                source = str(input_doc["csv"])
            else:
                raise ConfigError("input must carry a 'csv' path or a 'synthetic' spec")
            algorithms = tuple(
                AlgorithmSpec(
                    name=str(a["name"]),
                    kind=str(a.get("type", a["name"])),
                    params={k: v for k, v in a.items() if k not in ("name", "type")},
                )
                for a in doc["algorithms"]
            )
            kwargs = {}
            if "train" in doc:
                kwargs["train"] = TrainConfig(**doc["train"])
            if "gibbs" in doc:
                kwargs["gibbs_burn_in"] = int(doc["gibbs"].get("burn_in", 100))
                kwargs["gibbs_thin"] = int(doc["gibbs"].get("thin", 10))
            if "kernel_sigma" in doc:
                kwargs["kernel"] = KernelConfig(sigma=float(doc["kernel_sigma"]))
            if "nds_lambda" in doc:
                kwargs["nds"] = NdsConfig(lam=float(doc["nds_lambda"]))
            return cls(
                input=source,
                algorithms=algorithms,
                metrics=tuple(doc.get("metrics", METRICS)),
                missing_rate=float(doc.get("missing_rate", 0.0)),
                model=str(doc.get("model", "per_pattern")),
                num_samples=int(doc.get("L", 25)),
                beta=float(doc.get("beta", 0.05)),
                seed=int(doc.get("seed", 0)),
                output_dir=str(doc.get("output_dir", "out")),
                train_on=str(doc.get("train_on", "d_n")),
                workers=int(doc.get("workers", 1)),
                **kwargs,
            )
        except KeyError as exc:
            raise ConfigError(f"missing config field: {exc}") from exc

    def to_json(self) -> dict:
        doc = {
            "input": {"synthetic": self.input.to_json()}
            if isinstance(self.input, SyntheticSpec)
            else {"csv": self.input},
            "algorithms": [{"name": a.name, "type": a.kind, **a.params} for a in self.algorithms],
            "metrics": list(self.metrics),
            "missing_rate": self.missing_rate,
            "model": self.model,
            "L": self.num_samples,
            "beta": self.beta,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "train_on": self.train_on,
            "workers": self.workers,
            "train": {
                "l2": self.train.l2,
                "step": self.train.step,
                "max_iters": self.train.max_iters,
                "tol": self.train.tol,
            },
            "gibbs": {"burn_in": self.gibbs_burn_in, "thin": self.gibbs_thin},
        }
        return doc


@dataclass
class EvaluationReport:
    config: RunConfig
    row_ids: list[int]
    pattern_ids: list[int]
    scores: dict  # metric -> list (per row) of {algorithm: MetricScore}
    rank_matrices: dict  # metric -> RankMatrix
    rankings: dict  # metric -> RankingResult
    reference_samples: list  # per row SampleSet
    algorithm_samples: dict  # algorithm -> list of SampleSet
    num_patterns: int

    def ranking_json(self) -> str:
        doc = {
            "algorithms": [a.name for a in self.config.algorithms],
            "num_rows": len(self.row_ids),
            "num_patterns": self.num_patterns,
            "seed": self.config.seed,
            "model": self.config.model,
            "metrics": {m: r.to_json() for m, r in self.rankings.items()},
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


@dataclass
class ModelComparisonReport:
    config: RunConfig
    per_metric: dict  # metric -> comparison block
    degenerate_single_pattern: bool

    def to_json(self) -> dict:
        return {
            "degenerate_single_pattern": self.degenerate_single_pattern,
            "metrics": self.per_metric,
        }


def _load_input(cfg: RunConfig) -> tuple[Dataset, Optional[GroundTruth]]:
    if isinstance(cfg.input, SyntheticSpec):
        return generate_synthetic(cfg.input)
    data = load_csv(cfg.input)
    return data, None


def _stage(name: str):
    """Decorator-free stage context: re-raise with pipeline stage info."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, PipelineError):
                raise PipelineError(f"stage '{name}': {exc}") from exc
            return False

    return _Ctx()


def _train_models(
    cfg: RunConfig,
    train_data: Dataset,
    train_rows: Sequence[int],
    catalog: PatternCatalog,
) -> dict:
    """Pattern -> MrfParams map (a single shared entry for the single model)."""
    if cfg.model == "single":
        params = train_single_model(train_data, train_rows, catalog, cfg.train)
        return {pattern: params for pattern, _ in catalog.patterns}
    return {
        pattern: train_per_pattern(train_data, train_rows, pattern, cfg.train)
        for pattern, _ in catalog.patterns
    }


def run_evaluation(cfg: RunConfig) -> EvaluationReport:
    """Execute the full pipeline for one configuration."""
    with _stage("load"):
        base_data, truth = _load_input(cfg)
    return run_pipeline(cfg, base_data, truth)


def run_pipeline(cfg: RunConfig, base_data: Dataset, truth: Optional[GroundTruth]) -> EvaluationReport:
    """Pipeline steps on an already-loaded dataset (see run_evaluation)."""
    with _stage("inject"):
        if cfg.missing_rate > 0:
            if base_data.mask.any():
                raise ConfigError("cannot inject missingness: input already has missing cells")
            data = inject_mcar(base_data, cfg.missing_rate, derive_seed(cfg.seed, "mcar"))
        else:
            data = base_data
    with _stage("split"):
        d_n, d_m = split_rows(data)
        if not d_m:
            raise ConfigError("no rows with missing values to evaluate")
        catalog = extract_patterns(data, d_m)
    with _stage("train-model"):
        if cfg.train_on == "full_pre_injection":
            if base_data.mask.any():
                raise ConfigError("train_on=full_pre_injection requires a complete input")
            models = _train_models(cfg, base_data, list(range(base_data.num_rows)), catalog)
        else:
            models = _train_models(cfg, data, d_n, catalog)
    with _stage("fit-imputers"):
        imputers: list[tuple[str, Imputer]] = []
        for spec in cfg.algorithms:
            params = dict(spec.params)
            if spec.kind in ("mixture", "mice"):
                params.setdefault("seed", derive_seed(cfg.seed, "fit", spec.name))
            if spec.kind == "true_sampler" and truth is None:
                raise UnsupportedError("true_sampler requires synthetic input")
            imp = build_imputer(spec.kind, params, truth)
            imp.fit(data, d_n)
            imputers.append((spec.name, imp))

    pattern_by_row: dict[int, tuple[int, MissingPattern]] = {}
    for j, (pattern, rows) in enumerate(catalog.patterns):
        for r in rows:
            pattern_by_row[r] = (j, pattern)
    row_ids = sorted(pattern_by_row)

    def _row_task(row: int):
        j, pattern = pattern_by_row[row]
        observed_vals = data.cells[row, list(pattern.observed)]
        gcfg = GibbsConfig(
            burn_in=cfg.gibbs_burn_in,
            thin=cfg.gibbs_thin,
            num_samples=cfg.num_samples,
            seed=derive_seed(cfg.seed, "reference", row),
        )
        ref = gibbs_sample(models[pattern], observed_vals, pattern, gcfg)
        algs = {
            name: imp.impute(
                observed_vals, pattern, cfg.num_samples, derive_seed(cfg.seed, "impute", name, row)
            )
            for name, imp in imputers
        }
        scores = {
            metric: {
                name: compute_score(
                    metric, ref, ss, kernel=cfg.kernel, kl=cfg.kl, nds_cfg=cfg.nds, beta=cfg.beta
                )
                for name, ss in algs.items()
            }
            for metric in cfg.metrics
        }
        return ref, algs, scores

    with _stage("score-rows"):
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_row_task, row_ids))
        else:
            results = [_row_task(r) for r in row_ids]

    with _stage("aggregate"):
        reference_samples = [res[0] for res in results]
        algorithm_samples = {
            spec.name: [res[1][spec.name] for res in results] for spec in cfg.algorithms
        }
        names = [a.name for a in cfg.algorithms]
        scores = {m: [res[2][m] for res in results] for m in cfg.metrics}
        rank_matrices = {}
        rankings = {}
        for m in cfg.metrics:
            rm = scores_to_ranks(scores[m], names, metric=m, row_ids=row_ids)
            rank_matrices[m] = rm
            rankings[m] = aggregate(rm, cfg.beta)

    return EvaluationReport(
        config=cfg,
        row_ids=row_ids,
        pattern_ids=[pattern_by_row[r][0] for r in row_ids],
        scores=scores,
        rank_matrices=rank_matrices,
        rankings=rankings,
        reference_samples=reference_samples,
        algorithm_samples=algorithm_samples,
        num_patterns=catalog.num_patterns,
    )


def _ordering(result: RankingResult) -> tuple[str, ...]:
    order = np.argsort(np.array(result.avg_ranks), kind="stable")
    return tuple(result.algorithms[i] for i in order)


def compare_models(cfg: RunConfig) -> ModelComparisonReport:
    """Run per-pattern and single-model pipelines on identical seeds and
    report per-metric percent change in average ranks and whether the
    orderings agree."""
    cfg_pp = _replace_model(cfg, "per_pattern")
    cfg_sm = _replace_model(cfg, "single")
    report_pp = run_evaluation(cfg_pp)
    report_sm = run_evaluation(cfg_sm)
    per_metric = {}
    for m in cfg.metrics:
        pp = report_pp.rankings[m]
        sm = report_sm.rankings[m]
        pct = {
            a: 100.0 * abs(s - p) / p
            for a, p, s in zip(pp.algorithms, pp.avg_ranks, sm.avg_ranks)
        }
        per_metric[m] = {
            "per_pattern_avg_ranks": dict(zip(pp.algorithms, pp.avg_ranks)),
            "single_avg_ranks": dict(zip(sm.algorithms, sm.avg_ranks)),
            "percent_change": pct,
            "mean_percent_change": float(np.mean(list(pct.values()))),
            "orderings_identical": _ordering(pp) == _ordering(sm),
        }
    return ModelComparisonReport(
        config=cfg,
        per_metric=per_metric,
        degenerate_single_pattern=report_pp.num_patterns == 1,
    )


def _replace_model(cfg: RunConfig, model: str) -> RunConfig:
    doc = cfg.to_json()
    doc["model"] = model
    return RunConfig.from_json(doc)


def _atomic_write(path: str, content: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(content)
    os.replace(tmp, path)


def emit_report(report: EvaluationReport, out_dir: str) -> list[str]:
    """Write ranking.json, ranks.csv, scores.csv, and run_manifest.json.

    Files are written to temporaries and renamed into place; on failure the
    partially written set is removed.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    try:
        path = os.path.join(out_dir, "ranking.json")
        _atomic_write(path, report.ranking_json())
        written.append(path)

        names = [a.name for a in report.config.algorithms]
        lines = [",".join(["metric", "row_id", "pattern_id"] + names)]
        for m, rm in report.rank_matrices.items():
            for i, row_id in enumerate(report.row_ids):
                ranks = ",".join(repr(float(v)) for v in rm.ranks[i])
                lines.append(f"{m},{row_id},{report.pattern_ids[i]},{ranks}")
        path = os.path.join(out_dir, "ranks.csv")
        _atomic_write(path, "\n".join(lines) + "\n")
        written.append(path)

        lines = ["row_id,pattern_id,algorithm,metric,value"]
        for m in report.config.metrics:
            for i, row_id in enumerate(report.row_ids):
                for name in names:
                    score = report.scores[m][i][name]
                    lines.append(
                        f"{row_id},{report.pattern_ids[i]},{name},{m},{score.value!r}"
                    )
        path = os.path.join(out_dir, "scores.csv")
        _atomic_write(path, "\n".join(lines) + "\n")
        written.append(path)

        manifest = {
            "config": report.config.to_json(),
            "seed": report.config.seed,
            "versions": {
                "imputerank": __version__,
                "python": sys.version.split()[0],
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "scikit-learn": sklearn.__version__,
            },
        }
        path = os.path.join(out_dir, "run_manifest.json")
        _atomic_write(path, json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        written.append(path)
    except Exception:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise
    return written


def _load_config(path: str, args) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "missing_rate", None) is not None:
        doc["missing_rate"] = args.missing_rate
    if getattr(args, "output_dir", None) is not None:
        doc["output_dir"] = args.output_dir
    if getattr(args, "workers", None) is not None:
        doc["workers"] = args.workers
    return RunConfig.from_json(doc)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="imputerank",
        description="Evaluate and rank missing-value imputation algorithms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "compare-models"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to JSON run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--missing-rate", type=float, dest="missing_rate", default=None)
        p.add_argument("--output-dir", dest="output_dir", default=None)
        p.add_argument("--workers", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config, args)
    except (ConfigError, ImputeRankError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "run":
            report = run_evaluation(cfg)
            files = emit_report(report, cfg.output_dir)
            for f in files:
                print(f"wrote {f}")
            for m, r in report.rankings.items():
                ranks = ", ".join(f"{a}={v:.3f}" for a, v in zip(r.algorithms, r.avg_ranks))
                print(f"{m}: {ranks} (CD={r.cd:.3f}, reject={r.reject_null})")
        else:
            comparison = compare_models(cfg)
            os.makedirs(cfg.output_dir, exist_ok=True)
            path = os.path.join(cfg.output_dir, "model_comparison.json")
            _atomic_write(path, json.dumps(comparison.to_json(), sort_keys=True, indent=2) + "\n")
            print(f"wrote {path}")
            for m, block in comparison.per_metric.items():
                print(
                    f"{m}: mean % change {block['mean_percent_change']:.3f}, "
                    f"orderings identical: {block['orderings_identical']}"
                )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pipeline failures
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
