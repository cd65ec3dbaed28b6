"""Robustness-test runner over every (query source, truth source, embedder) permutation."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .classify import (
    DEFAULT_THRESHOLD,
    Predictions,
    RunConfig,
    build_truth_index,
    classify_corpus,
    confusion_from,
    write_predictions,
)
from .corpus import STYLE_SAMPLING, CorpusEntry, DatasetManifest, select, stride_of, subsample
from .embed import CachedEmbedder, Embedder, EmbedderProfile, make_embedder
from .errors import InvalidPlan, MedvecError, MissingData, UsageError
from .heatmap import render_heatmap
from .metrics import ConfusionMatrix, MetricsReport, compute_report

log = logging.getLogger(__name__)

SUMMARY_FIELDS = [
    "run_id",
    "query_source",
    "truth_source",
    "embedder",
    "sampling",
    "total_queries",
    "accuracy",
    "misclassification_rate",
    "misclassification_pct",
    "macro_f1",
    "rejected",
    "status",
]


@dataclass
class RobustnessPlan:
    query_sources: list[str]
    truth_sources: list[str]
    embedders: list[EmbedderProfile]
    threshold: float = DEFAULT_THRESHOLD
    output_dir: Path = Path("runs")
    sampling: dict[str, str] = field(default_factory=dict)
    sampling_mode: str = "stride"
    sampling_seed: int = 0
    workers: int = 1
    corpus_path: Path | None = None
    manifest_path: Path | None = None

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if self.corpus_path is not None:
            self.corpus_path = Path(self.corpus_path)
        if self.manifest_path is not None:
            self.manifest_path = Path(self.manifest_path)
        for name, value in self.sampling.items():
            stride_of(value)  # validate early
        names = [e.name for e in self.embedders]
        if len(set(names)) != len(names):
            raise InvalidPlan(f"embedder names must be unique: {names}")

    def __len__(self) -> int:
        return len(self.query_sources) * len(self.truth_sources) * len(self.embedders)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> RobustnessPlan:
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise UsageError(f"unknown plan keys: {sorted(extra)}")
        d = dict(d)
        try:
            d["embedders"] = [
                e if isinstance(e, EmbedderProfile) else EmbedderProfile.from_dict(e)
                for e in d.get("embedders", [])
            ]
        except TypeError as exc:
            raise UsageError(f"bad embedder profile: {exc}") from None
        for key in ("output_dir", "corpus_path", "manifest_path"):
            if d.get(key) is not None and base_dir is not None:
                d[key] = base_dir / d[key]
        try:
            return cls(**d)
        except TypeError as exc:
            raise UsageError(f"bad plan: {exc}") from None

    @classmethod
    def load(cls, path) -> RobustnessPlan:
        """Read a JSON plan file; relative paths resolve against its directory."""
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read plan {path}: {exc}") from None
        return cls.from_dict(d, base_dir=path.parent)


@dataclass
class RunResult:
    config: RunConfig
    matrix: ConfusionMatrix | None
    report: MetricsReport | None
    wall_time: float
    predictions: Predictions | None = None
    error: str | None = None


def enumerate_runs(plan: RobustnessPlan, styles: dict[str, str] | None = None) -> list[RunConfig]:
    """Cartesian product, query source major, then truth source, then embedder."""
    for name in ("query_sources", "truth_sources", "embedders"):
        if not getattr(plan, name):
            raise InvalidPlan(f"plan has no {name}")
    styles = styles or {}
    configs = []
    for q, t, emb in itertools.product(plan.query_sources, plan.truth_sources, plan.embedders):
        sampling = plan.sampling.get(q) or STYLE_SAMPLING[styles.get(q, "conversational")]
        configs.append(
            RunConfig(
                query_source=q,
                truth_source=t,
                embedder=emb,
                threshold=plan.threshold,
                sampling=sampling,
                sampling_mode=plan.sampling_mode,
                sampling_seed=plan.sampling_seed,
            )
        )
    return configs


def execute_run(
    config: RunConfig,
    corpus: Sequence[CorpusEntry],
    manifest: DatasetManifest,
    embedder: Embedder | None = None,
) -> RunResult:
    start = time.perf_counter()
    truths = select(corpus, config.truth_source, "truth")
    if not truths:
        raise MissingData(config.truth_source, "truth")
    queries = select(corpus, config.query_source, "query")
    if not queries:
        raise MissingData(config.query_source, "query")
    embedder = embedder or make_embedder(config.embedder)
    store = build_truth_index(truths, embedder, manifest)
    sampled = subsample(queries, config.sampling, config.sampling_mode, config.sampling_seed)
    predictions = classify_corpus(sampled, store, config, embedder)
    matrix = confusion_from(predictions, manifest.ailments)
    report = compute_report(matrix, accepted_correct=sum(p.positive for p in predictions))
    elapsed = time.perf_counter() - start
    log.info("run %s: %d queries, accuracy %.4f (%.2fs)", config.run_id, report.total_queries, report.accuracy, elapsed)
    return RunResult(config, matrix, report, elapsed, predictions)


def write_run_artifacts(result: RunResult, out_dir) -> Path:
    run_dir = Path(out_dir) / result.config.run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "matrix.csv").write_text(result.matrix.to_csv(), encoding="utf-8")
    (run_dir / "matrix.json").write_text(result.matrix.to_json(), encoding="utf-8")
    (run_dir / "report.json").write_text(result.report.to_json(), encoding="utf-8")
    render_heatmap(result.matrix, run_dir / "heatmap.svg", title=result.config.run_id)
    write_predictions(result.predictions, run_dir / "predictions.jsonl")
    return run_dir


def summary_row(result: RunResult) -> dict:
    cfg = result.config
    row = {
        "run_id": cfg.run_id,
        "query_source": cfg.query_source,
        "truth_source": cfg.truth_source,
        "embedder": cfg.embedder.name,
        "sampling": cfg.sampling,
    }
    if result.error is not None:
        return {**{k: "" for k in SUMMARY_FIELDS}, **row, "status": f"error: {result.error}"}
    rep = result.report
    return {
        **row,
        "total_queries": rep.total_queries,
        "accuracy": repr(rep.accuracy),
        "misclassification_rate": repr(rep.misclassification_rate),
        "misclassification_pct": rep.misclassification_percent(),
        "macro_f1": repr(rep.macro_f1),
        "rejected": rep.rejected,
        "status": "ok",
    }


def summary_csv(results: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in results:
        w.writerow(summary_row(r))
    return buf.getvalue()


def run_all(
    plan: RobustnessPlan,
    corpus: Sequence[CorpusEntry],
    manifest: DatasetManifest,
    workers: int | None = None,
    write: bool = True,
) -> list[RunResult]:
    """Execute every permutation; a failed run is recorded and the rest proceed."""
    configs = enumerate_runs(plan, manifest.styles)
    # one cached embedder per profile so truth texts are embedded once per plan
    embedders = {p.name: CachedEmbedder(make_embedder(p)) for p in plan.embedders}

    def one(cfg: RunConfig) -> RunResult:
        start = time.perf_counter()
        try:
            return execute_run(cfg, corpus, manifest, embedders[cfg.embedder.name])
        except MedvecError as exc:
            log.error("run %s failed: %s", cfg.run_id, exc)
            return RunResult(cfg, None, None, time.perf_counter() - start, error=f"{type(exc).__name__}: {exc}")

    workers = workers or plan.workers
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, configs))
    else:
        results = [one(c) for c in configs]
    if write:
        plan.output_dir.mkdir(parents=True, exist_ok=True)
        for r in results:
            if r.error is None:
                write_run_artifacts(r, plan.output_dir)
        (plan.output_dir / "summary.csv").write_text(summary_csv(results), encoding="utf-8")
    return results
