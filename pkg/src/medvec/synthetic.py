"""Offline synthetic corpus built from per-ailment keyword vocabularies.

Two variants ship frozen under ``medvec/data/synthetic``:

``disjoint``
    every ailment has its own vocabulary; nothing is shared.
``overlap``
    skin cancer and psoriasis each use ten terms, six of them shared (60%).

Sources imitate the three generation styles: two conversational sources write
long truth notes and list-style query responses (split into three-item
chunks); the flan-style source writes terse keyword truths and two-to-three
word queries. Query counts follow the per-source, per-ailment table used for
the original dataset.
"""

from __future__ import annotations

import random
from pathlib import Path

from .corpus import CorpusEntry, DatasetManifest, SplitConfig, split_list_response, write_jsonl

AILMENTS = [
    "glaucoma",
    "jaundice",
    "cyanosis",
    "psoriasis",
    "conjunctivitis",
    "scoliosis",
    "skin cancer",
    "gingivitis",
]

SOURCES = ["gpt-3.5-turbo", "llama-2-70b-chat", "flan-t5-xl"]
STYLES = {"gpt-3.5-turbo": "conversational", "llama-2-70b-chat": "conversational", "flan-t5-xl": "flan"}

QUERY_COUNTS = {
    "gpt-3.5-turbo": [135, 100, 115, 127, 136, 127, 145, 117],
    "flan-t5-xl": [200] * 8,
    "llama-2-70b-chat": [121, 157, 124, 129, 135, 116, 100, 130],
}

VOCAB = {
    "glaucoma": "intraocular pressure optic cupping tonometry peripheral tunnel halos gonioscopy nerve scotoma perimetry",
    "jaundice": "yellowing sclera bilirubin icterus dark urine pale stools hepatomegaly transaminases alkaline phosphatase",
    "cyanosis": "bluish lips fingertips hypoxemia oxygen saturation pulse oximetry dyspnea clubbing arterial gas",
    "psoriasis": "plaques silvery scales erythematous elbows knees scalp nail pitting auspitz koebner itching",
    "conjunctivitis": "redness tearing discharge conjunctival injection crusting eyelids gritty sensation chemosis follicles photophobia",
    "scoliosis": "curvature spine lateral cobb angle asymmetry shoulders rib hump adams forward bend",
    "skin cancer": "mole asymmetric border irregular diameter evolving pigmented lesion biopsy melanoma ulceration nodule",
    "gingivitis": "gums bleeding swollen tartar brushing halitosis gingival recession periodontal probing tender interdental",
}

SHARED_SKIN = "lesion scaly patches erythema pruritic crusted"
OVERLAP_VOCAB = {
    **VOCAB,
    "psoriasis": f"{SHARED_SKIN} silvery plaques elbows auspitz",
    "skin cancer": f"{SHARED_SKIN} mole asymmetric melanoma biopsy",
}

VARIANTS = {"disjoint": VOCAB, "overlap": OVERLAP_VOCAB}

# one opener per conversational truth note; these words never appear in queries
_OPENERS = [
    "On examination the following was noted:",
    "Clinical notes:",
    "Observations during the visit:",
]


def vocabulary(variant: str) -> dict[str, list[str]]:
    return {a: terms.split() for a, terms in VARIANTS[variant].items()}


def _truth_text(rng: random.Random, terms: list[str], style: str, detail: int) -> str:
    if style == "flan":
        picked = terms[:]
        rng.shuffle(picked)
        return ", ".join(picked)
    # every term appears at least once, some up to ``detail`` times
    bag = [t for t in terms for _ in range(rng.randint(1, detail))]
    rng.shuffle(bag)
    if len(bag) % 2:
        bag.append(rng.choice(terms))
    lines = [rng.choice(_OPENERS)]
    lines += [f"- {a}; {b}" for a, b in zip(bag[::2], bag[1::2])]
    return "\n".join(lines)


def _list_response(rng: random.Random, terms: list[str], max_words: int) -> str:
    n_items = rng.randint(5, 9)
    items = [" ".join(rng.sample(terms, rng.randint(2, max_words))) for _ in range(n_items)]
    return "\n".join(f"{i}. {item}" for i, item in enumerate(items, start=1))


def build_corpus(variant: str = "disjoint") -> tuple[list[CorpusEntry], DatasetManifest]:
    vocab = vocabulary(variant)
    entries: list[CorpusEntry] = []
    counts: dict[str, dict[str, int]] = {}
    for source in SOURCES:
        style = STYLES[source]
        detail = 2 if source == "gpt-3.5-turbo" else 1
        max_words = 3 if source == "gpt-3.5-turbo" else 2
        counts[source] = {}
        for ailment, target in zip(AILMENTS, QUERY_COUNTS[source]):
            rng = random.Random(f"{variant}:{source}:{ailment}")
            terms = vocab[ailment]
            entries.append(CorpusEntry(ailment, _truth_text(rng, terms, style, detail), source, "truth"))
            queries: list[str] = []
            while len(queries) < target:
                if style == "flan":
                    queries.append(" ".join(rng.sample(terms, rng.randint(2, 3))))
                else:
                    queries.extend(split_list_response(_list_response(rng, terms, max_words), SplitConfig(3)))
            entries.extend(CorpusEntry(ailment, q, source, "query") for q in queries[:target])
            counts[source][ailment] = target
    manifest = DatasetManifest(list(AILMENTS), list(SOURCES), counts, dict(STYLES))
    return entries, manifest


def write_variant(variant: str, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries, manifest = build_corpus(variant)
    corpus_path, manifest_path = out / "corpus.jsonl", out / "manifest.json"
    write_jsonl(entries, corpus_path)
    manifest.save(manifest_path)
    return corpus_path, manifest_path


def bundled_paths(variant: str = "disjoint") -> tuple[Path, Path]:
    """Paths of the frozen corpus and manifest shipped with the package."""
    if variant not in VARIANTS:
        raise KeyError(f"unknown synthetic variant {variant!r}")
    base = Path(__file__).parent / "data" / "synthetic" / variant
    return base / "corpus.jsonl", base / "manifest.json"
