"""Acceptance criteria, each run at its stated tolerance and time limit.

Every test prints one ``PASS``/``FAIL`` line; the lines are also repeated in
the pytest terminal summary (see conftest.py). Run standalone with
``python tests/test_acceptance.py``.
"""

import functools
import time
from pathlib import Path

import numpy as np

from medvec.classify import RunConfig, build_truth_index, classify_query, confusion_from
from medvec.corpus import (
    CorpusEntry,
    DatasetManifest,
    SplitConfig,
    load_template,
    read_jsonl,
    select,
    split_list_response,
    subsample,
)
from medvec.embed import EmbedderProfile, LocalHashEmbedder
from medvec.harness import RobustnessPlan, enumerate_runs, run_all
from medvec.metrics import ConfusionMatrix, compute_report
from medvec.synthetic import AILMENTS, SOURCES, STYLES, bundled_paths
from medvec.vecstore import RecordMetadata, VectorRecord, VectorStore

from oracles import full_sort_top_k

RESULTS: list[str] = []


def criterion(name, limit):
    """Time the wrapped check, fail it if it overruns ``limit`` seconds, and log a line."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.perf_counter()
            error = None
            try:
                fn(*args, **kwargs)
            except Exception as exc:
                error = exc
            elapsed = time.perf_counter() - start
            if error is None and elapsed >= limit:
                error = AssertionError(f"took {elapsed:.2f}s, limit {limit}s")
            status = "PASS" if error is None else "FAIL"
            line = f"{status}  {name}  ({elapsed:.2f}s / limit {limit}s)"
            if error is not None:
                line += f"  -- {error}"
            RESULTS.append(line)
            print(line)
            if error is not None:
                raise error

        return run

    return wrap


def load(variant):
    c, m = bundled_paths(variant)
    return read_jsonl(c), DatasetManifest.load(m)


def base_matrix():
    return np.eye(8, dtype=np.int64) * 100


SKIN, PSO = AILMENTS.index("skin cancer"), AILMENTS.index("psoriasis")


@criterion("metrics oracle 1: recall 117/200 = 0.585", 1.0)
def test_metrics_recall_0585():
    counts = base_matrix()
    counts[SKIN] = 0
    counts[SKIN, SKIN], counts[SKIN, PSO] = 117, 83
    rep = compute_report(ConfusionMatrix(AILMENTS, counts))
    assert abs(rep.per_class["skin cancer"]["recall"] - 0.585) <= 1e-9


@criterion('metrics oracle 2: 58/1600 -> 0.03625, "3.63%"', 1.0)
def test_metrics_misclassification_363():
    counts = np.eye(8, dtype=np.int64) * 200
    for i, n in enumerate([10, 5, 8, 12, 3, 7, 9, 4]):
        counts[i, i] -= n
        counts[i, (i + 1) % 8] += n
    rep = compute_report(ConfusionMatrix(AILMENTS, counts))
    assert rep.total_queries == 1600 and rep.total_queries - rep.correct == 58
    assert rep.misclassification_rate == 0.03625
    assert rep.misclassification_percent() == "3.63%"


@criterion("metrics oracle 3: skin-cancer row 145 = 35 + 110 (102 psoriasis), recall 35/145", 1.0)
def test_metrics_row_145():
    counts = base_matrix()
    counts[SKIN] = [1, 2, 3, 102, 1, 0, 35, 1]
    m = ConfusionMatrix(AILMENTS, counts)
    # conservation: the row, the cells and the grand total agree
    assert m.counts[SKIN].sum() == 145
    assert m.counts[SKIN].sum() - m.counts[SKIN, SKIN] == 110
    assert m.total == 7 * 100 + 145
    rep = compute_report(m)
    assert abs(rep.per_class["skin cancer"]["recall"] - 35 / 145) <= 1e-9


@criterion("top-k exactness vs full-sort oracle (dims 768/1536, k=1,3, with duplicate ties)", 10.0)
def test_topk_exactness():
    rng = np.random.default_rng(2024)
    for dim in (768, 1536):
        data = rng.normal(size=(1000, dim))
        # the last 100 rows duplicate earlier ones, so exact ties exist
        data[900:] = data[rng.choice(900, size=100, replace=False)]
        store = VectorStore()
        for i, v in enumerate(data):
            store.upsert(VectorRecord(f"v{i}", v, RecordMetadata("glaucoma")))
        queries = rng.normal(size=(100, dim))
        # half the queries sit exactly on a duplicated vector
        queries[::2] = data[900 + rng.choice(100, size=50, replace=False)]
        for q in queries:
            expected = full_sort_top_k(data, q, 3)
            for k in (1, 3):
                got = [h.record_id for h in store.query_top_k(q, k=k)]
                assert got == [f"v{i}" for i in expected[:k]], (dim, k)


@criterion("permutation count: 3 x 3 x 2 = 18 runs in stable order", 1.0)
def test_permutation_count():
    embs = [EmbedderProfile("hash768", dim=768, seed=0), EmbedderProfile("hash1536", dim=1536, seed=0)]
    plan = RobustnessPlan(SOURCES, SOURCES, embs)
    runs = enumerate_runs(plan, STYLES)
    assert len(runs) == 18
    expected = [f"{q}__{t}__{e.name}" for q in SOURCES for t in SOURCES for e in embs]
    assert [r.run_id for r in runs] == expected
    assert [r.run_id for r in enumerate_runs(plan, STYLES)] == expected


@criterion("corpus rules: split [3,3,3,1], 135->45, 200->40, templates byte-for-byte", 1.0)
def test_corpus_rules():
    ten = "\n".join(f"{i}. finding {i}" for i in range(1, 11))
    chunks = split_list_response(ten, SplitConfig(3, keep_partial_tail=True))
    assert [len(c.split("\n")) for c in chunks] == [3, 3, 3, 1]
    g = [CorpusEntry("glaucoma", f"q{i}", "gpt-3.5-turbo", "query") for i in range(135)]
    assert len(subsample(g, "third")) == 45
    f = [CorpusEntry("glaucoma", f"q{i}", "flan-t5-xl", "query") for i in range(200)]
    assert len(subsample(f, "fifth")) == 40
    common = (
        "Do not include the patient's name, age, gender, or any patient specific details including date of "
        "observation. Do not tell me that the notes are not comprehensive, I already know this. Do not tell me "
        "about anything that requires further investigation."
    )
    assert load_template("truth_conversational") == (
        "What notes would a doctor have when observing a patient with a {ailment}? Include test results. " + common
    )
    assert load_template("query_conversational") == (
        "What notes would a doctor have when observing a patient with {ailment}? Make notes short and concise. "
        "Laboratory test results are optional. " + common
        + " Do not tell me what ailment the patient is presented with."
    )
    assert load_template("query_flan_style") == "What are observable symptoms of {ailment}? List them out to be technical."


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _plan(out="runs", seed=0, dims=(768, 1536)):
    embs = [EmbedderProfile(f"hash{d}", dim=d, seed=seed) for d in dims]
    return RobustnessPlan(SOURCES, SOURCES, embs, output_dir=out)


@criterion("end-to-end: disjoint 18/18 accuracy 1.0, byte-identical reruns; overlap confusion in skin block", 60.0)
def test_end_to_end(tmp_path):
    corpus, manifest = load("disjoint")
    first = run_all(_plan(tmp_path / "a"), corpus, manifest)
    run_all(_plan(tmp_path / "b"), corpus, manifest)
    assert len(first) == 18
    assert all(r.error is None and r.report.accuracy == 1.0 for r in first)
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert len(a) == 18 * 5 + 1
    assert a == b

    corpus, manifest = load("overlap")
    skin_block = {"skin cancer", "psoriasis"}
    for r in run_all(_plan(tmp_path / "c"), corpus, manifest):
        counts = r.matrix.counts.copy()
        np.fill_diagonal(counts, 0)
        i, j = divmod(int(counts.argmax()), len(AILMENTS))
        assert counts[i, j] > 0, r.config.run_id
        assert {AILMENTS[i], AILMENTS[j]} == skin_block, (r.config.run_id, AILMENTS[i], AILMENTS[j])


@criterion("dimensionality: mean accuracy at dim 1536 >= dim 96 for a majority of 5 seeds", 60.0)
def test_dimension_monotonicity():
    corpus, manifest = load("overlap")
    wins = 0
    for seed in range(5):
        results = run_all(_plan(seed=seed, dims=(96, 1536)), corpus, manifest, write=False)
        mean = {
            d: np.mean([r.report.accuracy for r in results if r.config.embedder.dim == d]) for d in (96, 1536)
        }
        wins += mean[1536] >= mean[96]
    assert wins >= 3, f"only {wins}/5 seeds satisfied the inequality"


@criterion("gate: no shared tokens -> similarity < 0.5, rejected, 8x8 totals intact", 1.0)
def test_gate_behavior():
    corpus, manifest = load("disjoint")
    profile = EmbedderProfile("hash768", dim=768, seed=0)
    emb = LocalHashEmbedder(profile)
    store = build_truth_index(select(corpus, "gpt-3.5-turbo", "truth"), emb, manifest)
    cfg = RunConfig("gpt-3.5-turbo", "gpt-3.5-turbo", profile)
    good = [classify_query(q, store, cfg, emb) for q in select(corpus, "gpt-3.5-turbo", "query")[:16]]
    stray = classify_query(CorpusEntry("glaucoma", "zebra umbrella quartz", "x", "query"), store, cfg, emb)
    assert stray.similarity < 0.5 and stray.accepted is False
    before = confusion_from(good, manifest.ailments)
    after = confusion_from(good + [stray], manifest.ailments)
    assert after.counts.shape == (8, 8)
    assert after.rejected == before.rejected + 1
    assert after.total == before.total + 1 == 17


if __name__ == "__main__":
    import inspect
    import sys
    import tempfile

    failed = 0
    for name, fn in list(globals().items()):
        if not name.startswith("test_"):
            continue
        try:
            if "tmp_path" in inspect.signature(fn).parameters:
                with tempfile.TemporaryDirectory() as d:
                    fn(tmp_path=Path(d))
            else:
                fn()
        except Exception:
            failed += 1
    sys.exit(1 if failed else 0)
