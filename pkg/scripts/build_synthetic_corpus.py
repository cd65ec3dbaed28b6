"""Regenerate the frozen synthetic corpora shipped under medvec/data/synthetic.

    python scripts/build_synthetic_corpus.py            # rewrite bundled files
    python scripts/build_synthetic_corpus.py --out tmp  # write elsewhere
"""

import argparse
from pathlib import Path

from medvec.synthetic import VARIANTS, bundled_paths, write_variant


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, help="output root (default: the package data directory)")
    ap.add_argument("--variant", choices=sorted(VARIANTS), action="append", help="repeatable; default all")
    args = ap.parse_args()
    for variant in args.variant or sorted(VARIANTS):
        target = args.out / variant if args.out else bundled_paths(variant)[0].parent
        corpus, manifest = write_variant(variant, target)
        print(f"{variant}: {corpus} {manifest}")


if __name__ == "__main__":
    main()
