"""Text embedders: a deterministic feature-hashing embedder and a generic HTTP client.

Local hashing scheme
--------------------
Text is lowercased and split on runs of non-alphanumeric characters. For each
token, ``H = int.from_bytes(blake2b(token_utf8, digest_size=8,
key=seed_as_8_le_bytes).digest(), "little")``. The token's bucket is
``H % dim``; its sign is ``-1`` when bit 63 of ``H`` is set, else ``+1``.
Signed counts are accumulated per bucket and the result is L2-normalized.
Negative seeds are taken modulo 2**64.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx
import numpy as np

from .errors import BatchEmbedError, DegenerateVector, DimensionMismatch, EmptyText, ProviderUnavailable, UsageError
from .vecstore import as_vector

log = logging.getLogger(__name__)

PROVIDERS = ("local_hash", "remote_http")
TOKEN_ENV = "MEDVEC_EMBED_TOKEN"

_TOKEN_RE = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class EmbedderProfile:
    name: str
    provider: str = "local_hash"
    dim: int = 768
    seed: int | None = 0
    endpoint: str | None = None
    max_in_flight: int = 4
    requests_per_minute: int = 600

    def __post_init__(self):
        if self.provider not in PROVIDERS:
            raise UsageError(f"unknown provider {self.provider!r}")
        if self.dim <= 0:
            raise UsageError("embedder dim must be positive")
        if self.provider == "remote_http" and not self.endpoint:
            raise UsageError(f"remote profile {self.name!r} needs an endpoint")
        if self.provider == "local_hash" and self.seed is None:
            raise UsageError(f"local profile {self.name!r} needs a seed")
        if self.max_in_flight <= 0 or self.requests_per_minute <= 0:
            raise UsageError("max_in_flight and requests_per_minute must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> EmbedderProfile:
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise UsageError(f"unknown embedder profile keys: {sorted(extra)}")
        return cls(**d)

    def cache_identity(self) -> str:
        origin = str(self.seed) if self.provider == "local_hash" else str(self.endpoint)
        return f"{self.provider}|{self.dim}|{origin}"


@dataclass(frozen=True)
class EmbedRequest:
    text: str
    profile: EmbedderProfile

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise EmptyText("text to embed is empty")


class Embedder(Protocol):
    profile: EmbedderProfile

    @property
    def dim(self) -> int: ...

    def embed(self, text: str) -> np.ndarray: ...


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def token_hash(token: str, seed: int) -> int:
    key = (seed % 2**64).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def local_hash_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Signed feature-hashing bag-of-words embedding, L2-normalized."""
    if dim <= 0:
        raise UsageError("dim must be positive")
    tokens = tokenize(text)
    if not tokens:
        raise EmptyText(f"no tokens in {text!r}")
    vec = np.zeros(dim)
    for tok in tokens:
        h = token_hash(tok, seed)
        vec[h % dim] += -1.0 if h >> 63 else 1.0
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        # every token cancelled against another in the same bucket
        raise DegenerateVector(f"hashed tokens of {text!r} cancel to a zero vector")
    return as_vector(vec / norm)


class LocalHashEmbedder:
    def __init__(self, profile: EmbedderProfile):
        if profile.provider != "local_hash":
            raise UsageError("LocalHashEmbedder needs a local_hash profile")
        self.profile = profile
        self.calls = 0

    @property
    def dim(self) -> int:
        return self.profile.dim

    def embed(self, text: str) -> np.ndarray:
        EmbedRequest(text, self.profile)
        self.calls += 1
        return local_hash_embed(text, self.profile.dim, self.profile.seed)


class RateLimiter:
    """Spaces request starts at least ``60 / requests_per_minute`` seconds apart."""

    def __init__(
        self,
        requests_per_minute: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.interval = 60.0 / requests_per_minute
        self._clock = clock
        self._sleep = sleep
        self._next = None
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            slot = now if self._next is None else max(now, self._next)
            self._next = slot + self.interval
        if slot > now:
            self._sleep(slot - now)


class RemoteHttpEmbedder:
    """JSON-over-HTTP embedding client.

    POSTs ``{"input": text, "dim": dim}`` and expects ``{"embedding": [...]}``.
    Retries up to ``attempts`` times with exponential backoff; a 429 response
    honours ``Retry-After`` when present. Vectors are returned unnormalized.
    """

    def __init__(
        self,
        profile: EmbedderProfile,
        client: httpx.Client | None = None,
        attempts: int = 3,
        backoff: float = 0.5,
        timeout: float = 30.0,
        sleep: Callable[[float], None] = time.sleep,
        limiter: RateLimiter | None = None,
    ):
        if profile.provider != "remote_http":
            raise UsageError("RemoteHttpEmbedder needs a remote_http profile")
        self.profile = profile
        headers = {}
        token = os.environ.get(TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = headers
        self.attempts = attempts
        self.backoff = backoff
        self._sleep = sleep
        self.limiter = limiter or RateLimiter(profile.requests_per_minute, sleep=sleep)
        self._in_flight = threading.BoundedSemaphore(profile.max_in_flight)
        self._count_lock = threading.Lock()
        self.calls = 0

    @property
    def dim(self) -> int:
        return self.profile.dim

    def embed(self, text: str) -> np.ndarray:
        EmbedRequest(text, self.profile)
        last: Exception | None = None
        for attempt in range(self.attempts):
            delay = self.backoff * 2**attempt
            self.limiter.acquire()
            try:
                with self._in_flight:
                    with self._count_lock:
                        self.calls += 1
                    resp = self._client.post(
                        self.profile.endpoint,
                        json={"input": text, "dim": self.profile.dim},
                        headers=self._headers,
                    )
            except httpx.HTTPError as exc:
                last = exc
                log.warning("embed request failed (attempt %d): %s", attempt + 1, exc)
            else:
                if resp.status_code == 200:
                    return self._parse(resp)
                last = ProviderUnavailable(f"HTTP {resp.status_code} from {self.profile.endpoint}")
                if resp.status_code == 429:
                    delay = _retry_after(resp, delay)
                elif resp.status_code < 500:
                    raise last
                log.warning("embed request got HTTP %d (attempt %d)", resp.status_code, attempt + 1)
            if attempt + 1 < self.attempts:
                self._sleep(delay)
        raise ProviderUnavailable(f"embedding endpoint failed after {self.attempts} attempts: {last}")

    def _parse(self, resp: httpx.Response) -> np.ndarray:
        try:
            values = resp.json()["embedding"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderUnavailable(f"malformed embedding response: {exc}") from None
        vec = as_vector(values)
        if vec.size != self.profile.dim:
            raise DimensionMismatch(f"endpoint returned dim {vec.size}, profile expects {self.profile.dim}")
        return vec


def _retry_after(resp: httpx.Response, default: float) -> float:
    try:
        return max(0.0, float(resp.headers.get("Retry-After", "")))
    except ValueError:
        return default


def make_embedder(profile: EmbedderProfile, **kwargs) -> Embedder:
    if profile.provider == "local_hash":
        return LocalHashEmbedder(profile)
    return RemoteHttpEmbedder(profile, **kwargs)


def embed_text(req: EmbedRequest, embedder: Embedder | None = None) -> np.ndarray:
    embedder = embedder or make_embedder(req.profile)
    return embedder.embed(req.text)


def embed_batch(texts: Sequence[str], embedder: Embedder) -> list[np.ndarray]:
    """Embed ``texts`` preserving order; remote profiles fan out up to max_in_flight."""
    for i, t in enumerate(texts):
        if not t or not t.strip():
            raise BatchEmbedError(i, EmptyText("empty text"))

    def one(item):
        i, text = item
        try:
            return embedder.embed(text)
        except Exception as exc:
            raise BatchEmbedError(i, exc) from exc

    workers = embedder.profile.max_in_flight if embedder.profile.provider == "remote_http" else 1
    if workers == 1 or len(texts) <= 1:
        return [one(item) for item in enumerate(texts)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, enumerate(texts)))


@dataclass
class EmbeddingCache:
    """Content-addressed embedding cache, in memory or on disk.

    On disk each entry is ``<root>/<hex[:2]>/<hex>.npy``; the hex digest is a
    SHA-256 over the profile identity and the SHA-256 of the text.
    """

    root: Path | None = None
    _mem: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.root is not None:
            self.root = Path(self.root)
            self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(req: EmbedRequest) -> str:
        text_digest = hashlib.sha256(req.text.encode("utf-8")).hexdigest()
        ident = json.dumps([req.profile.cache_identity(), text_digest])
        return hashlib.sha256(ident.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.npy"

    def get(self, key: str, dim: int) -> np.ndarray | None:
        if self.root is None:
            return self._mem.get(key)
        path = self._path(key)
        if not path.exists():
            return None
        try:
            vec = np.load(path, allow_pickle=False)
            vec = as_vector(vec)
        except Exception as exc:
            log.warning("discarding corrupt cache entry %s: %s", path, exc)
            return None
        if vec.size != dim:
            log.warning("discarding cache entry %s with dim %d", path, vec.size)
            return None
        return vec

    def put(self, key: str, vec: np.ndarray) -> None:
        with self._lock:
            if self.root is None:
                self._mem[key] = vec
                return
            path = self._path(key)
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            with os.fdopen(fd, "wb") as fh:
                np.save(fh, np.asarray(vec), allow_pickle=False)
            os.replace(tmp, path)


def cache_get_or_embed(cache: EmbeddingCache, req: EmbedRequest, embedder: Embedder) -> np.ndarray:
    key = cache.key(req)
    hit = cache.get(key, req.profile.dim)
    if hit is not None:
        return hit
    vec = embedder.embed(req.text)
    cache.put(key, vec)
    return vec


class CachedEmbedder:
    """Wraps an embedder so every ``embed`` goes through a cache."""

    def __init__(self, inner: Embedder, cache: EmbeddingCache | None = None):
        self.inner = inner
        self.profile = inner.profile
        self.cache = cache if cache is not None else EmbeddingCache()

    @property
    def dim(self) -> int:
        return self.inner.dim

    def embed(self, text: str) -> np.ndarray:
        return cache_get_or_embed(self.cache, EmbedRequest(text, self.profile), self.inner)
