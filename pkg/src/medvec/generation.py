"""Live corpus generation against text-generation endpoints.

Wire format: POST ``{"prompt": str, "max_tokens": int, "temperature": float}``,
response ``{"text": str}``. Only used by ``medvec generate``; everything else
runs on the bundled frozen corpus.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import httpx

from .corpus import (
    CorpusEntry,
    DatasetManifest,
    GenerationProfile,
    SplitConfig,
    render_prompt,
    split_list_response,
)
from .errors import EmptyResponse, ProviderUnavailable, UsageError

log = logging.getLogger(__name__)

TOKEN_ENV = "MEDVEC_GENERATE_TOKEN"


@dataclass(frozen=True)
class SourceEndpoint:
    name: str
    endpoint: str
    style: str = "conversational"

    def templates(self) -> tuple[str, str]:
        """(truth template, query template) for this source."""
        if self.style == "flan":
            # flan-style models get the short symptom prompt for both roles
            return "query_flan_style", "query_flan_style"
        return "truth_conversational", "query_conversational"


class GenerationClient:
    def __init__(
        self,
        endpoint: str,
        client: httpx.Client | None = None,
        attempts: int = 3,
        backoff: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self._client = client or httpx.Client(timeout=120.0)
        self.attempts = attempts
        self.backoff = backoff
        self._sleep = sleep
        token = os.environ.get(TOKEN_ENV)
        self._headers = {"Authorization": f"Bearer {token}"} if token else {}

    def generate(self, prompt: str, profile: GenerationProfile) -> str:
        body = {"prompt": prompt, "max_tokens": profile.max_tokens, "temperature": profile.temperature}
        last = None
        for attempt in range(self.attempts):
            try:
                resp = self._client.post(self.endpoint, json=body, headers=self._headers)
                if resp.status_code == 200:
                    text = resp.json()["text"]
                    if not isinstance(text, str):
                        raise ProviderUnavailable("generation response 'text' is not a string")
                    return text
                last = f"HTTP {resp.status_code}"
                if resp.status_code < 500 and resp.status_code != 429:
                    break
            except (httpx.HTTPError, ValueError, KeyError) as exc:
                last = exc
            log.warning("generation call to %s failed (attempt %d): %s", self.endpoint, attempt + 1, last)
            if attempt + 1 < self.attempts:
                self._sleep(self.backoff * 2**attempt)
        raise ProviderUnavailable(f"generation endpoint {self.endpoint} failed: {last}")


def generate_corpus(
    sources: Sequence[SourceEndpoint],
    ailments: Sequence[str],
    queries_per_ailment: int,
    clients: dict[str, GenerationClient] | None = None,
    split: SplitConfig = SplitConfig(),
    temperature: float = 1.5,
    max_calls: int | None = None,
) -> tuple[list[CorpusEntry], DatasetManifest]:
    """Generate one truth document and up to ``queries_per_ailment`` queries per (source, ailment).

    Conversational responses are split into chunks of ``split.chunk_size``
    list items; flan-style responses are used whole.
    """
    if queries_per_ailment <= 0:
        raise UsageError("queries_per_ailment must be positive")
    clients = dict(clients or {})
    max_calls = max_calls or 4 * queries_per_ailment
    entries: list[CorpusEntry] = []
    counts: dict[str, dict[str, int]] = {}
    for src in sources:
        client = clients.setdefault(src.name, GenerationClient(src.endpoint))
        truth_tpl, query_tpl = src.templates()
        truth_profile = GenerationProfile("truth", truth_tpl, temperature=temperature)
        query_profile = GenerationProfile("query", query_tpl, temperature=temperature)
        counts[src.name] = {}
        for ailment in ailments:
            text = client.generate(render_prompt(truth_tpl, ailment), truth_profile).strip()
            entries.append(CorpusEntry(ailment, text, src.name, "truth"))
            queries: list[str] = []
            calls = 0
            while len(queries) < queries_per_ailment and calls < max_calls:
                calls += 1
                raw = client.generate(render_prompt(query_tpl, ailment), query_profile)
                if src.style == "flan":
                    if raw.strip():
                        queries.append(raw.strip())
                    continue
                try:
                    queries.extend(split_list_response(raw, split))
                except EmptyResponse:
                    log.info("empty list response for %s/%s", src.name, ailment)
            queries = queries[:queries_per_ailment]
            entries.extend(CorpusEntry(ailment, q, src.name, "query") for q in queries)
            counts[src.name][ailment] = len(queries)
    manifest = DatasetManifest(
        ailments=list(ailments),
        sources=[s.name for s in sources],
        per_source_counts=counts,
        styles={s.name: s.style for s in sources},
    )
    return entries, manifest
