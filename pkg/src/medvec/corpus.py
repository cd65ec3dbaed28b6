"""Corpus construction rules: prompt templates, list splitting, subsampling, validation, I/O.

List grammar used by :func:`split_list_response`
------------------------------------------------
* A *marker line* starts (after optional indentation) with ``-``, ``*``,
  ``N.`` or ``N)`` followed by whitespace.
* The indentation of the first marker line defines the top level. Each
  top-level marker line opens a new item.
* Deeper-indented marker lines, and unmarked lines directly below an item
  (no blank line in between), are continuations joined to the item with a
  single space.
* Unmarked text before the first item or after a blank line is dropped.
* If there are no marker lines at all, every non-blank line is one item.
"""

from __future__ import annotations

import json
import math
import random
import re
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CorpusFormatError, EmptyResponse, InvalidFraction, UnknownTemplate, UsageError

TEMPLATE_IDS = ("truth_conversational", "query_conversational", "query_flan_style")
ROLES = ("truth", "query")
STYLES = ("conversational", "flan")

TRUTH_MAX_TOKENS = 500
QUERY_MAX_TOKENS = 50
DEFAULT_TEMPERATURE = 1.5
DEFAULT_CAPS = {"truth": TRUTH_MAX_TOKENS, "query": QUERY_MAX_TOKENS}

# default query sampling per source style
STYLE_SAMPLING = {"conversational": "third", "flan": "fifth"}
NAMED_FRACTIONS = {"all": 1, "third": 3, "fifth": 5}

_MARKER = re.compile(r"^(\s*)(?:[-*]|\d+[.)])(?:\s+(.*))?$")


@dataclass(frozen=True)
class GenerationProfile:
    role: str
    template_id: str
    max_tokens: int | None = None
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        if self.role not in ROLES:
            raise UsageError(f"role must be one of {ROLES}")
        if self.template_id not in TEMPLATE_IDS:
            raise UnknownTemplate(self.template_id)
        if self.max_tokens is None:
            object.__setattr__(self, "max_tokens", DEFAULT_CAPS[self.role])
        if self.max_tokens <= 0:
            raise UsageError("max_tokens must be positive")
        if self.temperature < 0:
            raise UsageError("temperature must be non-negative")


@dataclass(frozen=True)
class CorpusEntry:
    ailment: str
    text: str
    source_model: str
    kind: str
    approx_tokens: int = -1

    def __post_init__(self):
        if self.kind not in ROLES:
            raise UsageError(f"kind must be one of {ROLES}, got {self.kind!r}")
        if self.approx_tokens < 0:
            object.__setattr__(self, "approx_tokens", approx_token_count(self.text))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SplitConfig:
    chunk_size: int = 3
    keep_partial_tail: bool = True

    def __post_init__(self):
        if self.chunk_size < 1:
            raise UsageError("chunk_size must be >= 1")


@dataclass
class DatasetManifest:
    ailments: list[str]
    sources: list[str]
    per_source_counts: dict[str, dict[str, int]] = field(default_factory=dict)
    styles: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.ailments) < 2:
            raise UsageError("a manifest needs at least two ailments")
        if len(set(self.ailments)) != len(self.ailments):
            raise UsageError("manifest ailment labels must be unique")
        for src, counts in self.per_source_counts.items():
            for label, n in counts.items():
                if n < 0:
                    raise UsageError(f"negative count for ({src}, {label})")
        for src, style in self.styles.items():
            if style not in STYLES:
                raise UsageError(f"source {src!r} has unknown style {style!r}")

    def style_of(self, source: str) -> str:
        return self.styles.get(source, "conversational")

    def to_dict(self) -> dict:
        return {
            "ailments": list(self.ailments),
            "sources": list(self.sources),
            "styles": dict(self.styles),
            "per_source_counts": {s: dict(c) for s, c in self.per_source_counts.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> DatasetManifest:
        return cls(
            ailments=list(d["ailments"]),
            sources=list(d.get("sources", [])),
            per_source_counts={s: dict(c) for s, c in d.get("per_source_counts", {}).items()},
            styles=dict(d.get("styles", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> DatasetManifest:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_template(template_id: str) -> str:
    if template_id not in TEMPLATE_IDS:
        raise UnknownTemplate(f"unknown template {template_id!r}")
    return resources.files("medvec.data.templates").joinpath(f"{template_id}.txt").read_text(encoding="utf-8")


def render_prompt(template_id: str, ailment: str) -> str:
    if not ailment:
        raise UsageError("ailment must be non-empty")
    return load_template(template_id).replace("{ailment}", ailment)


def approx_token_count(text: str) -> int:
    """Rough token count at four characters per token, rounded up."""
    return -(-len(text) // 4)


def parse_list_items(text: str) -> list[str]:
    lines = text.splitlines()
    first = next((m for m in map(_MARKER.match, lines) if m), None)
    if first is None:
        return [ln.strip() for ln in lines if ln.strip()]
    top = len(first.group(1).expandtabs())
    items: list[list[str]] = []
    open_item = False
    for line in lines:
        m = _MARKER.match(line)
        if m and len(m.group(1).expandtabs()) <= top:
            items.append([(m.group(2) or "").strip()])
            open_item = True
        elif not line.strip():
            open_item = False
        elif items and (m or open_item):
            body = (m.group(2) or "") if m else line
            items[-1].append(body.strip())
            open_item = True
    joined = (" ".join(p for p in parts if p) for parts in items)
    return [item for item in joined if item]


def split_list_response(text: str, cfg: SplitConfig = SplitConfig()) -> list[str]:
    """Split a list-style response into queries of ``chunk_size`` consecutive items."""
    items = parse_list_items(text)
    if not items:
        raise EmptyResponse("no list items found in response")
    chunks = [items[i : i + cfg.chunk_size] for i in range(0, len(items), cfg.chunk_size)]
    if not cfg.keep_partial_tail and len(chunks[-1]) < cfg.chunk_size:
        chunks.pop()
    return ["\n".join(c) for c in chunks]


def stride_of(fraction) -> int:
    """Map ``all``/``third``/``fifth``, ``"1/n"``, or a unit Fraction to a stride."""
    if isinstance(fraction, str):
        name = fraction.strip().lower()
        if name in NAMED_FRACTIONS:
            return NAMED_FRACTIONS[name]
        num, sep, den = name.partition("/")
        try:
            if not sep:
                raise ValueError
            num, den = int(num), int(den)
        except ValueError:
            raise InvalidFraction(f"cannot parse fraction {fraction!r}") from None
        if den == 0:
            raise InvalidFraction("zero denominator")
        fraction = Fraction(num, den)
    elif isinstance(fraction, int) and not isinstance(fraction, bool):
        fraction = Fraction(1, fraction) if fraction else None
        if fraction is None:
            raise InvalidFraction("zero denominator")
    if not isinstance(fraction, Fraction):
        raise InvalidFraction(f"unsupported fraction {fraction!r}")
    if fraction.numerator != 1 or fraction.denominator < 1:
        raise InvalidFraction(f"only unit fractions 1/n are supported, got {fraction}")
    return fraction.denominator


def subsample(
    entries: Sequence[CorpusEntry],
    fraction="all",
    mode: str = "stride",
    seed: int = 0,
) -> list[CorpusEntry]:
    """Keep roughly ``fraction`` of the entries in each (source, ailment) group.

    ``stride`` keeps group indices 0, s, 2s, ...; ``random`` keeps a seeded
    sample of the same size. Either way the output keeps input order.
    """
    s = stride_of(fraction)
    groups: dict[tuple[str, str], list[int]] = defaultdict(list)
    for i, e in enumerate(entries):
        groups[(e.source_model, e.ailment)].append(i)
    keep: set[int] = set()
    if mode == "stride":
        for idx in groups.values():
            keep.update(idx[::s])
    elif mode == "random":
        rng = random.Random(seed)
        for key in sorted(groups):
            idx = groups[key]
            keep.update(rng.sample(idx, math.ceil(len(idx) / s)))
    else:
        raise UsageError(f"unknown subsample mode {mode!r}")
    return [e for i, e in enumerate(entries) if i in keep]


@dataclass(frozen=True)
class Violation:
    index: int | None
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, index, message) -> None:
        self.violations.append(Violation(index, message))


def validate_corpus(
    entries: Sequence[CorpusEntry],
    manifest: DatasetManifest,
    caps: dict[str, int] | None = None,
    check_counts: bool = False,
) -> ValidationReport:
    caps = {**DEFAULT_CAPS, **(caps or {})}
    labels = set(manifest.ailments)
    report = ValidationReport(checked=len(entries))
    counts: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    for i, e in enumerate(entries):
        if e.ailment not in labels:
            report.add(i, f"unknown ailment label {e.ailment!r}")
        if not e.text.strip():
            report.add(i, "empty text")
        tokens = approx_token_count(e.text)
        if tokens > caps[e.kind]:
            report.add(i, f"{e.kind} entry has ~{tokens} tokens, limit {caps[e.kind]}")
        if e.kind == "query":
            counts[e.source_model][e.ailment] += 1
    if check_counts:
        for src, expected in manifest.per_source_counts.items():
            for label, n in expected.items():
                got = counts.get(src, {}).get(label, 0)
                if got != n:
                    report.add(None, f"source {src!r} ailment {label!r}: {got} queries, manifest says {n}")
        for src, got in counts.items():
            for label, n in got.items():
                if label in labels and label not in manifest.per_source_counts.get(src, {}):
                    report.add(None, f"source {src!r} ailment {label!r}: {n} queries not in manifest")
    return report


def write_jsonl(entries: Iterable[CorpusEntry], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(json.dumps(e.to_dict(), ensure_ascii=False) + "\n")


def read_jsonl(path) -> list[CorpusEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                entries.append(
                    CorpusEntry(
                        ailment=obj["ailment"],
                        text=obj["text"],
                        source_model=obj["source_model"],
                        kind=obj["kind"],
                        approx_tokens=obj.get("approx_tokens", -1),
                    )
                )
            except (ValueError, KeyError, TypeError, UsageError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: bad corpus line: {exc}") from None
    return entries


def select(entries: Iterable[CorpusEntry], source: str, kind: str) -> list[CorpusEntry]:
    return [e for e in entries if e.source_model == source and e.kind == kind]
