"""Flat in-memory vector index with per-record metadata and exact cosine search.

Snapshot layout (all integers little-endian)::

    header   b"VTS1" | u16 version | u32 dim | u64 record_count | u64 next_seq
    record   u32 body_len | body
    body     u64 insert_seq
             u16 id_len | id (UTF-8)
             dim x f64 components
             u16 pair_count | pair_count x (u16 key_len | key | u32 val_len | val)

Metadata pairs are UTF-8 and written in sorted key order, so identical stores
produce identical bytes. An empty store has dim 0.
"""

from __future__ import annotations

import os
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import CorruptSnapshot, DegenerateVector, DimensionMismatch, EmptyIndex

MAGIC = b"VTS1"
SNAPSHOT_VERSION = 1
KINDS = ("truth", "query")
NORM_TOLERANCE = 1e-6

_HEADER = struct.Struct("<4sHIQQ")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def as_vector(components: Sequence[float] | np.ndarray, normalized: bool = False) -> np.ndarray:
    """Validate ``components`` and return them as a read-only float64 array.

    With ``normalized=True`` the L2 norm must already be 1 within 1e-6.
    """
    if isinstance(components, np.ndarray) and not components.flags.writeable and components.dtype == np.float64:
        vec = components
    else:
        vec = np.array(components, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise DimensionMismatch("vector must have at least one component")
    if not np.all(np.isfinite(vec)):
        raise DegenerateVector("vector contains NaN or Inf")
    if normalized:
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise DegenerateVector(f"vector flagged normalized has norm {norm}")
    vec.flags.writeable = False
    return vec


def cosine(a, b) -> float:
    """Cosine similarity clamped to [-1, 1]."""
    a = as_vector(a)
    b = as_vector(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension {a.size} != {b.size}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateVector("cosine of a zero-norm vector is undefined")
    sim = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, sim))


@dataclass(frozen=True)
class RecordMetadata:
    ailment: str
    source_model: str = ""
    kind: str = "truth"
    approx_tokens: int = 0

    def __post_init__(self):
        if not self.ailment:
            raise ValueError("ailment label must be non-empty")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.approx_tokens < 0:
            raise ValueError("approx_tokens must be non-negative")

    def to_pairs(self) -> list[tuple[str, str]]:
        return sorted(
            {
                "ailment": self.ailment,
                "source_model": self.source_model,
                "kind": self.kind,
                "approx_tokens": str(self.approx_tokens),
            }.items()
        )

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> RecordMetadata:
        d = dict(pairs)
        return cls(
            ailment=d["ailment"],
            source_model=d.get("source_model", ""),
            kind=d.get("kind", "truth"),
            approx_tokens=int(d.get("approx_tokens", "0")),
        )


@dataclass(frozen=True)
class VectorRecord:
    id: str
    vector: np.ndarray
    metadata: RecordMetadata
    insert_seq: int = -1  # assigned by the store

    def __post_init__(self):
        object.__setattr__(self, "vector", as_vector(self.vector))


@dataclass(frozen=True)
class QueryHit:
    record_id: str
    ailment: str
    similarity: float


class VectorStore:
    """Exact flat cosine index.

    Concurrent ``query_top_k`` calls are safe. ``upsert`` and ``restore``
    need exclusive access; an internal lock only serializes writers.
    """

    def __init__(self, dim: int | None = None):
        if dim is not None and dim <= 0:
            raise DimensionMismatch("store dimension must be positive")
        self._dim = dim
        self._records: list[VectorRecord] = []
        self._by_id: dict[str, int] = {}
        self._next_seq = 0
        self._lock = threading.Lock()
        # unit-normalized rows; capacity doubles as records are appended
        self._units = np.zeros((0, dim or 0))
        self._seqs = np.zeros(0, dtype=np.int64)

    @property
    def dim(self) -> int | None:
        return self._dim

    def __len__(self) -> int:
        return len(self._records)

    def count(self) -> int:
        return len(self._records)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._by_id

    def get(self, record_id: str) -> VectorRecord:
        return self._records[self._by_id[record_id]]

    def records(self) -> list[VectorRecord]:
        return list(self._records)

    def upsert(self, record: VectorRecord) -> str:
        """Insert or replace by id; a replaced record keeps its insert_seq."""
        vec = record.vector
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise DegenerateVector(f"record {record.id!r} has a zero-norm vector")
        with self._lock:
            if self._dim is None:
                self._dim = vec.size
                self._units = np.zeros((0, vec.size))
            elif vec.size != self._dim:
                raise DimensionMismatch(
                    f"record {record.id!r} has dim {vec.size}, store is fixed at {self._dim}"
                )
            idx = self._by_id.get(record.id)
            if idx is None:
                seq = self._next_seq if record.insert_seq < 0 else record.insert_seq
                self._next_seq = max(self._next_seq, seq + 1)
                idx = len(self._records)
                self._grow(idx + 1)
                self._by_id[record.id] = idx
                self._records.append(VectorRecord(record.id, vec, record.metadata, seq))
            else:
                seq = self._records[idx].insert_seq
                self._records[idx] = VectorRecord(record.id, vec, record.metadata, seq)
            self._units[idx] = vec / norm
            self._seqs[idx] = seq
        return record.id

    def _grow(self, needed: int) -> None:
        cap = self._units.shape[0]
        if needed <= cap:
            return
        cap = max(needed, 2 * cap, 8)
        units = np.zeros((cap, self._dim))
        seqs = np.zeros(cap, dtype=np.int64)
        n = len(self._records)
        units[:n] = self._units[:n]
        seqs[:n] = self._seqs[:n]
        self._units, self._seqs = units, seqs

    def _unit_query(self, q) -> np.ndarray:
        q = as_vector(q)
        if self._dim is not None and q.size != self._dim:
            raise DimensionMismatch(f"query has dim {q.size}, store is fixed at {self._dim}")
        norm = float(np.linalg.norm(q))
        if norm == 0.0:
            raise DegenerateVector("query vector has zero norm")
        return q / norm

    @staticmethod
    def _scores(units: np.ndarray, uq: np.ndarray) -> np.ndarray:
        # row-wise reduction rather than BLAS gemv: identical rows give identical scores
        return np.clip((units * uq).sum(axis=1), -1.0, 1.0)

    def similarities(self, q) -> np.ndarray:
        """Cosine of ``q`` against every record, in insertion-slot order."""
        return self._scores(self._units[: len(self._records)], self._unit_query(q))

    def query_top_k(
        self,
        q,
        k: int,
        filter: Callable[[RecordMetadata], bool] | None = None,
    ) -> list[QueryHit]:
        """Exact top-k by cosine, ties broken by lower insert_seq."""
        if k <= 0:
            raise ValueError("k must be positive")
        records = self._records
        n = len(records)
        if n == 0:
            raise EmptyIndex("store is empty")
        uq = self._unit_query(q)
        units, seqs = self._units[:n], self._seqs[:n]
        if filter is not None:
            idx = np.array([i for i, r in enumerate(records) if filter(r.metadata)], dtype=np.intp)
            if idx.size == 0:
                raise EmptyIndex("no record matches the metadata filter")
            units, seqs = units[idx], seqs[idx]
        else:
            idx = np.arange(n)
        scores = self._scores(units, uq)
        if k < n:
            # partial selection; everything tied with the k-th score stays in play
            kth = np.partition(-scores, k - 1)[k - 1]
            cand = np.flatnonzero(-scores <= kth)
        else:
            cand = np.arange(scores.size)
        order = cand[np.lexsort((seqs[cand], -scores[cand]))][:k]
        return [
            QueryHit(records[idx[j]].id, records[idx[j]].metadata.ailment, float(scores[j]))
            for j in order
        ]

    def snapshot(self, path: str | os.PathLike) -> None:
        Path(path).write_bytes(self.to_bytes())

    def to_bytes(self) -> bytes:
        out = [_HEADER.pack(MAGIC, SNAPSHOT_VERSION, self._dim or 0, len(self._records), self._next_seq)]
        for rec in self._records:
            out.append(_encode_record(rec))
        return b"".join(out)

    @classmethod
    def restore(cls, path: str | os.PathLike) -> VectorStore:
        return cls.from_bytes(Path(path).read_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> VectorStore:
        if len(data) < _HEADER.size:
            raise CorruptSnapshot("truncated header", len(data))
        magic, version, dim, count, next_seq = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise CorruptSnapshot(f"bad magic {magic!r}", 0)
        if version != SNAPSHOT_VERSION:
            raise CorruptSnapshot(f"unsupported version {version}", 4)
        store = cls(dim or None)
        pos = _HEADER.size
        for _ in range(count):
            if pos + _U32.size > len(data):
                raise CorruptSnapshot("truncated record length", pos)
            (body_len,) = _U32.unpack_from(data, pos)
            start = pos + _U32.size
            if start + body_len > len(data):
                raise CorruptSnapshot("truncated record body", start)
            record = _decode_record(data, start, start + body_len, dim)
            if record.id in store:
                raise CorruptSnapshot(f"duplicate record id {record.id!r}", start)
            store.upsert(record)
            pos = start + body_len
        if pos != len(data):
            raise CorruptSnapshot("trailing bytes after last record", pos)
        store._next_seq = max(store._next_seq, next_seq)
        return store


def _encode_record(rec: VectorRecord) -> bytes:
    rid = rec.id.encode("utf-8")
    parts = [_U64.pack(rec.insert_seq), _U16.pack(len(rid)), rid]
    parts.append(np.asarray(rec.vector, dtype="<f8").tobytes())
    pairs = rec.metadata.to_pairs()
    parts.append(_U16.pack(len(pairs)))
    for key, val in pairs:
        kb, vb = key.encode("utf-8"), val.encode("utf-8")
        parts += [_U16.pack(len(kb)), kb, _U32.pack(len(vb)), vb]
    body = b"".join(parts)
    return _U32.pack(len(body)) + body


def _decode_record(data: bytes, pos: int, end: int, dim: int) -> VectorRecord:
    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > end:
            raise CorruptSnapshot("record field overruns record body", pos)
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    def text(n: int) -> str:
        at = pos
        try:
            return take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptSnapshot("invalid UTF-8", at) from None

    (seq,) = _U64.unpack(take(8))
    (id_len,) = _U16.unpack(take(2))
    rid = text(id_len)
    vec_at = pos
    vec = np.frombuffer(take(8 * dim), dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(vec)):
        raise CorruptSnapshot("non-finite vector component", vec_at)
    (npairs,) = _U16.unpack(take(2))
    pairs = []
    for _ in range(npairs):
        (klen,) = _U16.unpack(take(2))
        key = text(klen)
        (vlen,) = _U32.unpack(take(4))
        pairs.append((key, text(vlen)))
    if pos != end:
        raise CorruptSnapshot("unused bytes in record body", pos)
    meta_at = pos
    try:
        meta = RecordMetadata.from_pairs(pairs)
    except (KeyError, ValueError) as exc:
        raise CorruptSnapshot(f"bad metadata: {exc}", meta_at) from None
    if not np.any(vec):
        raise CorruptSnapshot("zero-norm vector", vec_at)
    return VectorRecord(rid, vec, meta, seq)
