"""Mean accuracy of the local hashing embedder across dimensions and seeds.

Hash collisions merge unrelated tokens at small dimensions, so accuracy on the
overlap corpus should not improve as the dimension shrinks.

    python scripts/dimension_sweep.py --dims 48 96 384 768 1536 --seeds 5
"""

import argparse

import numpy as np

from medvec.corpus import DatasetManifest, read_jsonl
from medvec.embed import EmbedderProfile
from medvec.harness import RobustnessPlan, run_all
from medvec.synthetic import bundled_paths


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--variant", default="overlap", choices=["disjoint", "overlap"])
    ap.add_argument("--dims", type=int, nargs="+", default=[96, 384, 768, 1536])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    corpus_path, manifest_path = bundled_paths(args.variant)
    corpus, manifest = read_jsonl(corpus_path), DatasetManifest.load(manifest_path)
    table = np.zeros((args.seeds, len(args.dims)))
    failures = np.zeros_like(table, dtype=int)
    for seed in range(args.seeds):
        embs = [EmbedderProfile(f"hash{d}", dim=d, seed=seed) for d in args.dims]
        plan = RobustnessPlan(manifest.sources, manifest.sources, embs)
        results = run_all(plan, corpus, manifest, write=False)
        for j, d in enumerate(args.dims):
            mine = [r for r in results if r.config.embedder.dim == d]
            table[seed, j] = np.mean([r.report.accuracy for r in mine])
            failures[seed, j] = sum(len(r.predictions.failures) for r in mine)

    print("seed  " + "  ".join(f"{d:>8}" for d in args.dims))
    for seed, row in enumerate(table):
        print(f"{seed:4d}  " + "  ".join(f"{v:8.4f}" for v in row))
    print("mean  " + "  ".join(f"{v:8.4f}" for v in table.mean(axis=0)))
    print("fail  " + "  ".join(f"{v:8d}" for v in failures.sum(axis=0)))


if __name__ == "__main__":
    main()
