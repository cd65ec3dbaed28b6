"""Run the full query-source x truth-source x embedder matrix and print a summary.

    python scripts/run_robustness.py --variant overlap --out runs/overlap
    python scripts/run_robustness.py --plan configs/robustness.json
"""

import argparse
import logging

from medvec.corpus import DatasetManifest, read_jsonl
from medvec.embed import EmbedderProfile
from medvec.harness import RobustnessPlan, run_all
from medvec.synthetic import bundled_paths


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--plan", help="JSON plan file; overrides --variant/--dims")
    ap.add_argument("--variant", default="disjoint", choices=["disjoint", "overlap"])
    ap.add_argument("--dims", type=int, nargs="+", default=[768, 1536])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    if args.plan:
        plan = RobustnessPlan.load(args.plan)
    else:
        plan = RobustnessPlan(
            query_sources=[], truth_sources=[], output_dir=args.out, workers=args.workers,
            embedders=[EmbedderProfile(f"hash{d}", dim=d, seed=args.seed) for d in args.dims],
        )
    corpus_path, manifest_path = bundled_paths(args.variant)
    corpus = read_jsonl(plan.corpus_path or corpus_path)
    manifest = DatasetManifest.load(plan.manifest_path or manifest_path)
    plan.query_sources = plan.query_sources or list(manifest.sources)
    plan.truth_sources = plan.truth_sources or list(manifest.sources)

    results = run_all(plan, corpus, manifest)
    print(f"{'run':58} {'n':>5} {'acc':>7} {'miscl':>7} {'macroF1':>7} {'rej':>5}")
    for r in results:
        if r.error:
            print(f"{r.config.run_id:58} {r.error}")
            continue
        rep = r.report
        print(f"{r.config.run_id:58} {rep.total_queries:5d} {rep.accuracy:7.4f} "
              f"{rep.misclassification_percent():>7} {rep.macro_f1:7.4f} {rep.rejected:5d}")
    print(f"artifacts in {plan.output_dir}")


if __name__ == "__main__":
    main()
