"""Fact memory: normalized vector rows with provenance, exact retrieval,
per-query memory assembly, and the attention read that summarizes a memory
matrix for one query.

Search is a full scan over unit-normalized float32 rows; inner product on
unit vectors is cosine similarity, and at desk scale (well under 10^5 rows)
exact search needs no index structure. Ordering everywhere is score
descending, then confidence descending, then insertion order ascending.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import (
    DataFormatError,
    EmptyMemoryError,
    EmptyStoreError,
    NumericError,
    ShapeError,
    UsageError,
)
from .extraction import FactTriple, fact_from_json, fact_to_json

FORMAT_VERSION = 1
DEDUP_COSINE = 0.9999
NORM_TOL = 1e-6


@dataclass(frozen=True)
class QueryVector:
    """A unit-normalized query embedding plus the text it came from."""

    q: np.ndarray
    source_text: str

    def __post_init__(self) -> None:
        norm = float(np.linalg.norm(self.q))
        if abs(norm - 1.0) > NORM_TOL:
            raise NumericError(f"query vector norm {norm} is not 1")


def make_query(vec: np.ndarray, source_text: str = "") -> QueryVector:
    """Normalize an arbitrary vector into a QueryVector."""
    v = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise NumericError("cannot normalize a zero query vector")
    return QueryVector(q=v / norm, source_text=source_text)


@dataclass
class StoredFact:
    fact: FactTriple
    seq: int  # insertion sequence; doubles as the row index


class MemoryStore:
    """Append-only matrix of unit fact rows with aligned metadata."""

    def __init__(self, dim: int):
        if dim <= 0:
            raise UsageError("memory dimension must be positive")
        self.dim = dim
        self.rows = np.empty((0, dim), dtype=np.float32)
        self.meta: list[StoredFact] = []

    def __len__(self) -> int:
        return len(self.meta)

    def add_facts(self, facts: Sequence[FactTriple]) -> int:
        """Normalize and append; returns how many rows were actually added.

        A fact whose row is near-identical (cosine >= 0.9999) to an existing
        row with the same three texts is treated as a duplicate and skipped.
        """
        before = len(self.meta)
        self.add_with_ids(facts)
        return len(self.meta) - before

    def add_with_ids(self, facts: Sequence[FactTriple]) -> list[int]:
        """Like add_facts, but returns one row id per input fact; a
        duplicate maps to the id of the row it collides with."""
        ids = []
        for fact in facts:
            if fact.m.shape != (self.dim,):
                raise ShapeError(
                    f"fact row has shape {fact.m.shape}, store wants ({self.dim},)"
                )
            norm = float(np.linalg.norm(fact.m.astype(np.float64)))
            if norm == 0.0:
                raise NumericError("cannot store a zero fact vector")
            row = (fact.m.astype(np.float64) / norm).astype(np.float32)
            existing = self._find_duplicate(row, fact)
            if existing is not None:
                ids.append(existing)
                continue
            self.rows = np.vstack([self.rows, row[None, :]])
            self.meta.append(StoredFact(fact=fact, seq=len(self.meta)))
            ids.append(len(self.meta) - 1)
        return ids

    def _find_duplicate(self, row: np.ndarray, fact: FactTriple) -> int | None:
        for i, stored in enumerate(self.meta):
            f = stored.fact
            if (
                f.subject_text == fact.subject_text
                and f.relation_text == fact.relation_text
                and f.object_text == fact.object_text
            ):
                cos = float(
                    self.rows[i].astype(np.float64) @ row.astype(np.float64)
                )
                if cos >= DEDUP_COSINE:
                    return i
        return None


def _rank_key(score: float, stored: StoredFact) -> tuple:
    return (-score, -stored.fact.confidence, stored.seq)


def top_k(store: MemoryStore, query: QueryVector, k: int) -> list[tuple[int, float]]:
    """The k best (row index, inner product) pairs, exact full scan."""
    if len(store) == 0:
        raise EmptyStoreError("retrieval over an empty store")
    if k < 1:
        raise UsageError("k must be at least 1")
    scores = store.rows.astype(np.float64) @ query.q
    order = sorted(
        range(len(store)),
        key=lambda i: _rank_key(float(scores[i]), store.meta[i]),
    )
    return [(i, float(scores[i])) for i in order[:k]]


@dataclass
class MemoryEntry:
    row_index: int  # index in the originating store
    fact: FactTriple
    score: float
    seq: int


@dataclass
class MemoryMatrix:
    """Per-query slice of the store: up to trim_rows rows, score-ordered."""

    matrix: np.ndarray  # N x dim float32, unit rows
    entries: list[MemoryEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def empty(cls, dim: int) -> "MemoryMatrix":
        return cls(matrix=np.empty((0, dim), dtype=np.float32), entries=[])


def assemble_memory(
    store: MemoryStore,
    query: QueryVector,
    passage_fact_ids: Sequence[Sequence[int]],
    slots_per_passage: int = 4,
    max_passages: int = 20,
    trim_rows: int = 64,
) -> MemoryMatrix:
    """Pool the best facts of the retrieved passages, rescore, and trim.

    passage_fact_ids lists store row indices per retrieved passage, best
    passage first. Up to slots_per_passage facts per passage (by inner
    product with the query) from at most max_passages passages are pooled;
    the pool is rescored globally and cut to trim_rows.
    """
    scores = (
        store.rows.astype(np.float64) @ query.q if len(store) else np.empty(0)
    )
    pooled: list[int] = []
    seen: set[int] = set()
    for ids in list(passage_fact_ids)[:max_passages]:
        ranked = sorted(
            ids, key=lambda i: _rank_key(float(scores[i]), store.meta[i])
        )
        for i in ranked[:slots_per_passage]:
            if i not in seen:
                seen.add(i)
                pooled.append(i)
    pooled.sort(key=lambda i: _rank_key(float(scores[i]), store.meta[i]))
    kept = pooled[:trim_rows]
    if not kept:
        return MemoryMatrix.empty(store.dim)
    return MemoryMatrix(
        matrix=store.rows[kept].copy(),
        entries=[
            MemoryEntry(
                row_index=i,
                fact=store.meta[i].fact,
                score=float(scores[i]),
                seq=store.meta[i].seq,
            )
            for i in kept
        ],
    )


def memory_read(
    memory: T.Tensor,
    query: T.Tensor,
    w_q: T.Tensor,
    w_k: T.Tensor,
    w_v: T.Tensor,
) -> tuple[T.Tensor, T.Tensor]:
    """Attention read over memory rows.

    memory is N x d, query is 1 x d; the projections map d -> d_k (query and
    key) and d -> d_v (value). Returns (c_mem: 1 x d_v, alpha: 1 x N).
    """
    if len(memory.shape) != 2 or memory.shape[0] == 0:
        raise EmptyMemoryError("memory_read needs at least one memory row")
    if query.shape != (1, memory.shape[1]):
        raise ShapeError(
            f"query shape {query.shape} does not match memory width {memory.shape[1]}"
        )
    d_k = w_q.shape[1]
    q_tilde = T.matmul(query, w_q)  # 1 x d_k
    k_tilde = T.matmul(memory, w_k)  # N x d_k
    v_tilde = T.matmul(memory, w_v)  # N x d_v
    logits = T.scale(T.matmul(q_tilde, T.transpose(k_tilde)), 1.0 / np.sqrt(d_k))
    alpha = T.softmax(logits)  # 1 x N
    c_mem = T.matmul(alpha, v_tilde)  # 1 x d_v
    return c_mem, alpha


def read_memory_matrix(
    mem: MemoryMatrix,
    query: QueryVector,
    w_q: T.Tensor,
    w_k: T.Tensor,
    w_v: T.Tensor,
) -> tuple[T.Tensor, T.Tensor]:
    """memory_read over a MemoryMatrix and a plain QueryVector."""
    m_t = T.tensor(mem.matrix.astype(np.float64))
    q_t = T.tensor(query.q[None, :])
    return memory_read(m_t, q_t, w_q, w_k, w_v)


# ---------------------------------------------------------------------------
# persistence: manifest.json + rows.f32 + meta.jsonl
# ---------------------------------------------------------------------------


def save_store(store: MemoryStore, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "dimension": store.dim,
        "count": len(store),
        "normalized": True,
    }
    (d / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    rows = np.ascontiguousarray(store.rows, dtype="<f4")
    (d / "rows.f32").write_bytes(rows.tobytes())
    with open(d / "meta.jsonl", "w", encoding="utf-8") as fh:
        for stored in store.meta:
            obj = fact_to_json(stored.fact)
            obj["seq"] = stored.seq
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_store(directory: str | Path) -> MemoryStore:
    d = Path(directory)
    try:
        manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataFormatError(f"no memory store at {d}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(
            f"unsupported store format version {manifest.get('format_version')}"
        )
    dim = int(manifest["dimension"])
    count = int(manifest["count"])
    store = MemoryStore(dim)
    raw = (d / "rows.f32").read_bytes()
    rows = np.frombuffer(raw, dtype="<f4")
    if rows.size != count * dim:
        raise DataFormatError(
            f"rows.f32 holds {rows.size} floats, manifest implies {count * dim}"
        )
    store.rows = rows.reshape(count, dim).copy()
    with open(d / "meta.jsonl", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            seq = int(obj.pop("seq"))
            store.meta.append(StoredFact(fact=fact_from_json(obj), seq=seq))
    if len(store.meta) != count:
        raise DataFormatError(
            f"meta.jsonl holds {len(store.meta)} records, manifest says {count}"
        )
    return store
