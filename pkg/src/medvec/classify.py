"""Nearest-truth classification with a similarity gate."""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

from .corpus import CorpusEntry, DatasetManifest
from .embed import Embedder, EmbedderProfile
from .errors import DimensionMismatch, EmptyIndex, ManifestMismatch, UsageError
from .metrics import ConfusionMatrix
from .vecstore import RecordMetadata, VectorRecord, VectorStore

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class RunConfig:
    query_source: str
    truth_source: str
    embedder: EmbedderProfile
    threshold: float = DEFAULT_THRESHOLD
    sampling: str = "all"
    sampling_mode: str = "stride"
    sampling_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise UsageError(f"threshold must be in [0, 1], got {self.threshold}")

    @property
    def run_id(self) -> str:
        return f"{self.query_source}__{self.truth_source}__{self.embedder.name}"


@dataclass(frozen=True)
class Prediction:
    query_id: str
    true_label: str
    predicted_label: str
    similarity: float
    accepted: bool

    @property
    def correct(self) -> bool:
        return self.true_label == self.predicted_label

    @property
    def positive(self) -> bool:
        """Same label and past the gate."""
        return self.correct and self.accepted


class Predictions(list):
    """Prediction list that also carries per-entry failures as ``(index, message)``."""

    def __init__(self, items=(), failures=None):
        super().__init__(items)
        self.failures: list[tuple[int, str]] = list(failures or [])


def build_truth_index(
    truth_entries: Sequence[CorpusEntry],
    embedder: Embedder,
    manifest: DatasetManifest | None = None,
) -> VectorStore:
    """One vector per ailment, inserted in manifest label order."""
    labels = list(manifest.ailments) if manifest else sorted({e.ailment for e in truth_entries})
    seen = Counter(e.ailment for e in truth_entries)
    missing = [a for a in labels if seen[a] == 0]
    duplicates = [a for a, n in seen.items() if n > 1]
    unknown = [a for a in seen if a not in labels]
    if missing or duplicates or unknown:
        parts = []
        if missing:
            parts.append(f"missing truth for {missing}")
        if duplicates:
            parts.append(f"duplicate truth for {duplicates}")
        if unknown:
            parts.append(f"labels not in manifest {unknown}")
        raise ManifestMismatch("; ".join(parts), missing, duplicates, unknown)
    by_label = {e.ailment: e for e in truth_entries}
    store = VectorStore(embedder.dim)
    for label in labels:
        e = by_label[label]
        vec = embedder.embed(e.text)
        if vec.size != embedder.dim:
            raise DimensionMismatch(f"embedder returned dim {vec.size}, expected {embedder.dim}")
        meta = RecordMetadata(label, e.source_model, "truth", e.approx_tokens)
        store.upsert(VectorRecord(f"truth:{e.source_model}:{label}", vec, meta))
    return store


def classify_query(
    entry: CorpusEntry,
    store: VectorStore,
    cfg: RunConfig,
    embedder: Embedder,
    query_id: str | None = None,
) -> Prediction:
    if store.dim is not None and store.dim != embedder.dim:
        raise DimensionMismatch(f"embedder dim {embedder.dim} does not match store dim {store.dim}")
    vec = embedder.embed(entry.text)
    (hit,) = store.query_top_k(vec, k=1)
    return Prediction(
        query_id=query_id or f"{entry.source_model}:{entry.ailment}",
        true_label=entry.ailment,
        predicted_label=hit.ailment,
        similarity=hit.similarity,
        accepted=hit.similarity >= cfg.threshold,
    )


def classify_corpus(
    entries: Sequence[CorpusEntry],
    store: VectorStore,
    cfg: RunConfig,
    embedder: Embedder,
    workers: int = 1,
) -> Predictions:
    """Classify every entry independently; failures are collected, not raised.

    Query ids are ``<source>:<ailment>:<position in entries>``.
    """
    if store.dim is not None and store.dim != embedder.dim:
        raise DimensionMismatch(f"embedder dim {embedder.dim} does not match store dim {store.dim}")
    if entries and not len(store):
        raise EmptyIndex("truth store is empty")

    def one(item):
        i, e = item
        try:
            return classify_query(e, store, cfg, embedder, f"{e.source_model}:{e.ailment}:{i}")
        except Exception as exc:
            log.warning("query %d failed: %s", i, exc)
            return exc

    items = list(enumerate(entries))
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, items))
    else:
        results = [one(item) for item in items]
    out = Predictions()
    for i, r in enumerate(results):
        if isinstance(r, Exception):
            out.failures.append((i, f"{type(r).__name__}: {r}"))
        else:
            out.append(r)
    return out


def confusion_from(predictions: Sequence[Prediction], labels: Sequence[str]) -> ConfusionMatrix:
    m = ConfusionMatrix(list(labels))
    for p in predictions:
        m.accumulate(p.true_label, p.predicted_label, p.accepted)
    return m


def write_predictions(predictions: Sequence[Prediction], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in predictions:
            fh.write(json.dumps(asdict(p)) + "\n")


def read_predictions(path) -> list[Prediction]:
    with open(path, encoding="utf-8") as fh:
        return [Prediction(**json.loads(line)) for line in fh if line.strip()]
