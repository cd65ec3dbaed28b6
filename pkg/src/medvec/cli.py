"""Command-line entry point: ``medvec <subcommand>``.

Settings come from built-in defaults, then the JSON ``--config`` file, then
``--set key=value`` overrides (values parsed as JSON when possible; dotted
keys reach into nested objects). Exit codes: 0 success, 1 domain error,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .classify import RunConfig, build_truth_index, classify_corpus, confusion_from, write_predictions
from .corpus import DatasetManifest, SplitConfig, read_jsonl, select, subsample, validate_corpus, write_jsonl
from .embed import EmbedderProfile, make_embedder
from .errors import DomainError, MissingData, UsageError
from .generation import SourceEndpoint, generate_corpus
from .harness import RobustnessPlan, enumerate_runs, run_all, summary_csv
from .heatmap import render_heatmap
from .metrics import ConfusionMatrix, compute_report, per_class_table
from .synthetic import bundled_paths
from .vecstore import VectorStore

log = logging.getLogger("medvec")

DEFAULTS = {
    "threshold": 0.5,
    "chunk_size": 3,
    "keep_partial_tail": True,
    "caps": {"truth": 500, "query": 50},
    "temperature": 1.5,
    "synthetic_variant": "disjoint",
    "corpus_path": None,
    "manifest_path": None,
    "query_sources": None,
    "truth_sources": None,
    "embedders": [
        {"name": "hash768", "provider": "local_hash", "dim": 768, "seed": 0},
        {"name": "hash1536", "provider": "local_hash", "dim": 1536, "seed": 0},
    ],
    "output_dir": "runs",
    "sampling": {},
    "sampling_mode": "stride",
    "sampling_seed": 0,
    "workers": 1,
    # used by `generate` only
    "generation_sources": [],
    "queries_per_ailment": 100,
    "ailments": None,
}

_PATH_KEYS = ("corpus_path", "manifest_path", "output_dir")


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def apply_override(cfg: dict, assignment: str) -> None:
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise UsageError(f"override {assignment!r} is not key=value")
    *parents, leaf = key.split(".")
    node = cfg
    for p in parents:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise UsageError(f"override {key!r}: {p!r} is not an object")
    node[leaf] = _parse_value(raw)


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        p = Path(path)
        try:
            loaded = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {p}: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        for key in _PATH_KEYS:
            if loaded.get(key) is not None:
                loaded[key] = str(p.parent / loaded[key])
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for o in overrides:
        apply_override(cfg, o)
    return cfg


def _data(cfg: dict):
    corpus_path, manifest_path = cfg["corpus_path"], cfg["manifest_path"]
    if corpus_path is None or manifest_path is None:
        bundled_corpus, bundled_manifest = bundled_paths(cfg["synthetic_variant"])
        corpus_path = corpus_path or bundled_corpus
        manifest_path = manifest_path or bundled_manifest
    try:
        manifest = DatasetManifest.load(manifest_path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read manifest {manifest_path}: {exc}") from None
    try:
        corpus = read_jsonl(corpus_path)
    except OSError as exc:
        raise UsageError(f"cannot read corpus {corpus_path}: {exc}") from None
    return corpus, manifest


def _profiles(cfg: dict) -> list[EmbedderProfile]:
    try:
        return [EmbedderProfile.from_dict(e) for e in cfg["embedders"]]
    except TypeError as exc:
        raise UsageError(f"bad embedder profile: {exc}") from None


def _profile(cfg: dict, name: str | None) -> EmbedderProfile:
    profiles = _profiles(cfg)
    if name is None:
        return profiles[0]
    for p in profiles:
        if p.name == name:
            return p
    raise UsageError(f"no embedder named {name!r}; have {[p.name for p in profiles]}")


def _plan(cfg: dict, manifest: DatasetManifest) -> RobustnessPlan:
    return RobustnessPlan(
        query_sources=cfg["query_sources"] or list(manifest.sources),
        truth_sources=cfg["truth_sources"] or list(manifest.sources),
        embedders=_profiles(cfg),
        threshold=cfg["threshold"],
        output_dir=cfg["output_dir"],
        sampling=cfg["sampling"],
        sampling_mode=cfg["sampling_mode"],
        sampling_seed=cfg["sampling_seed"],
        workers=cfg["workers"],
    )


def cmd_generate(args, cfg) -> int:
    sources = [SourceEndpoint(**s) for s in cfg["generation_sources"]]
    if not sources:
        raise UsageError("generate needs generation_sources with explicit endpoints in the config")
    ailments = cfg["ailments"]
    if not ailments:
        raise UsageError("generate needs an 'ailments' list in the config")
    entries, manifest = generate_corpus(
        sources,
        ailments,
        cfg["queries_per_ailment"],
        split=SplitConfig(cfg["chunk_size"], cfg["keep_partial_tail"]),
        temperature=cfg["temperature"],
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(entries, out / "corpus.jsonl")
    manifest.save(out / "manifest.json")
    print(json.dumps({"entries": len(entries), "out": str(out)}))
    return 0


def cmd_validate(args, cfg) -> int:
    corpus, manifest = _data(cfg)
    report = validate_corpus(corpus, manifest, cfg["caps"], check_counts=args.check_counts)
    for v in report.violations:
        where = f"entry {v.index}" if v.index is not None else "manifest"
        print(f"{where}: {v.message}", file=sys.stderr)
    print(json.dumps({"checked": report.checked, "violations": len(report.violations)}))
    return 0 if report.ok else 1


def cmd_index(args, cfg) -> int:
    corpus, manifest = _data(cfg)
    truths = select(corpus, args.truth_source, "truth")
    if not truths:
        raise MissingData(args.truth_source, "truth")
    store = build_truth_index(truths, make_embedder(_profile(cfg, args.embedder)), manifest)
    store.snapshot(args.out)
    print(json.dumps({"records": len(store), "dim": store.dim, "out": args.out}))
    return 0


def cmd_classify(args, cfg) -> int:
    corpus, manifest = _data(cfg)
    store = VectorStore.restore(args.store)
    profile = _profile(cfg, args.embedder)
    queries = select(corpus, args.query_source, "query")
    if not queries:
        raise MissingData(args.query_source, "query")
    run = RunConfig(
        args.query_source,
        args.truth_source or "",
        profile,
        cfg["threshold"],
        args.sampling or "all",
        cfg["sampling_mode"],
        cfg["sampling_seed"],
    )
    sampled = subsample(queries, run.sampling, run.sampling_mode, run.sampling_seed)
    preds = classify_corpus(sampled, store, run, make_embedder(profile))
    write_predictions(preds, args.out)
    matrix = confusion_from(preds, manifest.ailments)
    if args.matrix:
        Path(args.matrix).write_text(matrix.to_json(), encoding="utf-8")
    sys.stdout.write(compute_report(matrix, sum(p.positive for p in preds)).to_json())
    for i, msg in preds.failures:
        print(f"query {i}: {msg}", file=sys.stderr)
    return 1 if preds.failures else 0


def cmd_matrix(args, cfg) -> int:
    corpus, manifest = _data(cfg)
    plan = _plan(cfg, manifest)
    log.info("running %d permutations into %s", len(enumerate_runs(plan, manifest.styles)), plan.output_dir)
    results = run_all(plan, corpus, manifest)
    sys.stdout.write(summary_csv(results))
    return 0 if all(r.error is None for r in results) else 1


def cmd_report(args, cfg) -> int:
    path = Path(args.matrix)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read matrix {path}: {exc}") from None
    matrix = ConfusionMatrix.from_csv(text) if path.suffix == ".csv" else ConfusionMatrix.from_json(text)
    report = compute_report(matrix)
    if args.table:
        for row in per_class_table(matrix):
            print(
                f"{row.label}\tP={row.precision:.3f}\tR={row.recall:.3f}\tF1={row.f1:.3f}"
                f"\trow={row.row_sum}\tcol={row.col_sum}",
                file=sys.stderr,
            )
    if args.svg:
        render_heatmap(matrix, args.svg, title=path.parent.name)
    sys.stdout.write(report.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config / plan file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value (repeatable)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="medvec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="generate a corpus from live endpoints")
    p.add_argument("--out", required=True, help="output directory for corpus.jsonl and manifest.json")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", parents=[common], help="check a corpus against its manifest")
    p.add_argument("--check-counts", action="store_true", help="also compare query counts to the manifest")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("index", parents=[common], help="build and snapshot a truth index")
    p.add_argument("--truth-source", required=True)
    p.add_argument("--embedder", help="embedder profile name (default: first configured)")
    p.add_argument("--out", required=True, help="snapshot file to write")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("classify", parents=[common], help="classify queries against a snapshot")
    p.add_argument("--store", required=True, help="snapshot written by `index`")
    p.add_argument("--query-source", required=True)
    p.add_argument("--truth-source", help="recorded in the run config only")
    p.add_argument("--embedder", help="must match the profile the index was built with")
    p.add_argument("--sampling", help="all, third, fifth or 1/n (default all)")
    p.add_argument("--out", required=True, help="predictions JSONL to write")
    p.add_argument("--matrix", help="also write the confusion matrix JSON here")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("matrix", parents=[common], help="run the full robustness matrix")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("report", parents=[common], help="metrics and heatmap for a saved matrix")
    p.add_argument("--matrix", required=True, help="matrix.json or matrix.csv")
    p.add_argument("--svg", help="write a heatmap SVG here")
    p.add_argument("--table", action="store_true", help="print per-class rows to stderr")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"medvec: error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, OSError) as exc:
        print(f"medvec: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
