"""Document compilation and the two question-answering paths.

Compilation chunks a document into overlapping word-window passages, embeds
each passage, extracts facts from its parsed sentences, and appends them to
a persistent fact store. Answering then either reuses that store (the
precompiled path) or builds a transient store from the best-matching
passages of a never-seen document (the cold path). Both paths assemble the
same per-query memory matrix for the same document, weights and query.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataFormatError, UsageError
from .extraction import ParsedSentence, extract_facts
from .memory import (
    MemoryMatrix,
    MemoryStore,
    assemble_memory,
    load_store,
    make_query,
    save_store,
)
from .model import AnswerRecord, Model

MANIFEST_VERSION = 1
WINDOW_WORDS = 150
STRIDE_WORDS = 105
MIN_TAIL_WORDS = 30
TOP_PASSAGES = 20

_WORD_RE = re.compile(r"\S+")


@dataclass(frozen=True)
class Passage:
    passage_id: int
    char_start: int
    char_end: int
    text: str
    word_count: int


def chunk_document(
    text: str,
    window: int = WINDOW_WORDS,
    stride: int = STRIDE_WORDS,
    min_tail: int = MIN_TAIL_WORDS,
) -> list[Passage]:
    """Overlapping word windows with exact character spans.

    A final window shorter than min_tail words is merged into the previous
    passage instead of standing alone.
    """
    if window < 1 or stride < 1 or stride > window:
        raise UsageError("need 1 <= stride <= window")
    spans = [m.span() for m in _WORD_RE.finditer(text)]
    if not spans:
        raise UsageError("document contains no words")
    raw: list[tuple[int, int, int]] = []  # start word, end word (exclusive)
    at = 0
    while at < len(spans):
        end = min(at + window, len(spans))
        raw.append((at, end, end - at))
        if end == len(spans):
            break
        at += stride
    if len(raw) > 1 and raw[-1][2] < min_tail:
        prev_start = raw[-2][0]
        raw = raw[:-2] + [(prev_start, raw[-1][1], raw[-1][1] - prev_start)]
    passages = []
    for pid, (ws, we, _) in enumerate(raw):
        c0, c1 = spans[ws][0], spans[we - 1][1]
        passages.append(
            Passage(
                passage_id=pid,
                char_start=c0,
                char_end=c1,
                text=text[c0:c1],
                word_count=we - ws,
            )
        )
    return passages


def embed_passages(model: Model, passages: Sequence[Passage]) -> np.ndarray:
    """One unit row per passage (float32), mean-pooled token embeddings."""
    rows = [model.query_numpy(p.text).astype(np.float32) for p in passages]
    return np.stack(rows, axis=0)


def top_passage_ids(
    matrix: np.ndarray, query_vec: np.ndarray, k: int = TOP_PASSAGES
) -> list[int]:
    """Best k passage ids by inner product; ties go to the earlier passage."""
    scores = matrix.astype(np.float64) @ query_vec
    order = sorted(range(matrix.shape[0]), key=lambda i: (-scores[i], i))
    return order[:k]


# ---------------------------------------------------------------------------
# compilation
# ---------------------------------------------------------------------------


@dataclass
class CompiledDocument:
    doc_id: str
    source_sha256: str
    passages: list[Passage]
    passage_matrix: np.ndarray  # P x d float32 unit rows
    store: MemoryStore
    passage_fact_ids: list[list[int]]  # store row ids per passage

    @property
    def fact_count(self) -> int:
        return len(self.store)


def _check_sentences(
    passages: Sequence[Passage],
    sentences: Iterable[ParsedSentence],
    doc_id: str,
    strict: bool = True,
) -> list[ParsedSentence]:
    """Validate parse input against the chunked passages.

    strict raises on the first problem (compile time); otherwise a bad
    sentence is warned about and skipped (query time on a cold document).
    """
    seen: set[tuple[int, int]] = set()
    out = []
    for sent in sentences:
        problem = None
        if sent.doc_id != doc_id:
            problem = f"sentence for document {sent.doc_id!r} fed to {doc_id!r}"
        elif not 0 <= sent.passage_id < len(passages):
            problem = (
                f"sentence references passage {sent.passage_id}, "
                f"document has {len(passages)}"
            )
        elif (sent.passage_id, sent.sent_id) in seen:
            problem = f"duplicate sentence p{sent.passage_id}/s{sent.sent_id}"
        elif (
            passages[sent.passage_id].text[sent.char_start : sent.char_end]
            != sent.raw_text
        ):
            problem = (
                f"sentence p{sent.passage_id}/s{sent.sent_id} does not match "
                f"its passage slice"
            )
        if problem is not None:
            if strict:
                raise DataFormatError(problem)
            warnings.warn(f"skipping: {problem}", stacklevel=3)
            continue
        seen.add((sent.passage_id, sent.sent_id))
        out.append(sent)
    out.sort(key=lambda s: (s.passage_id, s.sent_id))
    return out


def compile_document(
    model: Model,
    doc_id: str,
    text: str,
    sentences: Iterable[ParsedSentence],
) -> CompiledDocument:
    """Chunk, embed, extract, and index one document."""
    passages = chunk_document(text)
    matrix = embed_passages(model, passages)
    ordered = _check_sentences(passages, sentences, doc_id)
    store = MemoryStore(model.config.memory_dim)
    per_passage: list[list[int]] = [[] for _ in passages]
    weights = model.extractor_weights()
    for sent in ordered:
        facts = extract_facts(sent, weights)
        ids = store.add_with_ids(facts)
        per_passage[sent.passage_id].extend(ids)
    per_passage = [list(dict.fromkeys(ids)) for ids in per_passage]
    if len(store) == 0:
        warnings.warn(f"document {doc_id!r} yielded no facts", stacklevel=2)
    return CompiledDocument(
        doc_id=doc_id,
        source_sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        passages=passages,
        passage_matrix=matrix,
        store=store,
        passage_fact_ids=per_passage,
    )


def save_compiled(compiled: CompiledDocument, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": MANIFEST_VERSION,
        "doc_id": compiled.doc_id,
        "source_sha256": compiled.source_sha256,
        "passage_count": len(compiled.passages),
        "fact_count": compiled.fact_count,
        "dimension": compiled.store.dim,
        "passage_fact_ids": compiled.passage_fact_ids,
    }
    (d / "doc_manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    with open(d / "passages.jsonl", "w", encoding="utf-8") as fh:
        for p in compiled.passages:
            fh.write(
                json.dumps(
                    {
                        "passage_id": p.passage_id,
                        "char_start": p.char_start,
                        "char_end": p.char_end,
                        "word_count": p.word_count,
                        "text": p.text,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    (d / "passage_rows.f32").write_bytes(
        np.ascontiguousarray(compiled.passage_matrix.astype("<f4")).tobytes()
    )
    save_store(compiled.store, d / "store")


def load_compiled(directory: str | Path) -> CompiledDocument:
    d = Path(directory)
    try:
        manifest = json.loads((d / "doc_manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataFormatError(f"no compiled document at {d}") from exc
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise DataFormatError(
            f"unsupported compiled-document version {manifest.get('format_version')}"
        )
    passages = []
    with open(d / "passages.jsonl", encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            passages.append(
                Passage(
                    passage_id=obj["passage_id"],
                    char_start=obj["char_start"],
                    char_end=obj["char_end"],
                    text=obj["text"],
                    word_count=obj["word_count"],
                )
            )
    if len(passages) != manifest["passage_count"]:
        raise DataFormatError("passage count does not match manifest")
    dim = manifest["dimension"]
    blob = (d / "passage_rows.f32").read_bytes()
    matrix = np.frombuffer(blob, dtype="<f4")
    if matrix.size != len(passages) * dim:
        raise DataFormatError("passage matrix size does not match manifest")
    matrix = matrix.reshape(len(passages), dim).copy()
    store = load_store(d / "store")
    if len(store) != manifest["fact_count"]:
        raise DataFormatError("fact count does not match manifest")
    return CompiledDocument(
        doc_id=manifest["doc_id"],
        source_sha256=manifest["source_sha256"],
        passages=passages,
        passage_matrix=matrix,
        store=store,
        passage_fact_ids=[list(ids) for ids in manifest["passage_fact_ids"]],
    )


def compile_or_load(
    model: Model,
    directory: str | Path,
    doc_id: str,
    text: str,
    sentences: Iterable[ParsedSentence],
) -> tuple[CompiledDocument, bool]:
    """Recompile only when the source text changed; returns (doc, reused)."""
    d = Path(directory)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    if (d / "doc_manifest.json").exists():
        compiled = load_compiled(d)
        if compiled.doc_id == doc_id and compiled.source_sha256 == digest:
            return compiled, True
    compiled = compile_document(model, doc_id, text, sentences)
    save_compiled(compiled, d)
    return compiled, False


# ---------------------------------------------------------------------------
# answering
# ---------------------------------------------------------------------------


@dataclass
class PathResult:
    record: AnswerRecord
    memory: MemoryMatrix
    passage_ids: list[int]
    seconds: float


def _assemble_for_query(
    model: Model,
    store: MemoryStore,
    passage_matrix: np.ndarray,
    passage_fact_ids: Sequence[Sequence[int]],
    query_text: str,
) -> tuple[MemoryMatrix, list[int]]:
    qvec = model.query_numpy(query_text)
    top = top_passage_ids(passage_matrix, qvec)
    pooled = [passage_fact_ids[pid] for pid in top]
    if len(store) == 0:
        return MemoryMatrix.empty(store.dim), top
    mem = assemble_memory(store, make_query(qvec, query_text), pooled)
    return mem, top


def answer_precompiled(
    model: Model,
    compiled: CompiledDocument,
    query_text: str,
    max_new_tokens: int = 24,
    mode: str = "greedy",
    temperature: float = 1.0,
    seed: int = 0,
) -> PathResult:
    """Answer against an already-compiled document (fast path)."""
    t0 = time.perf_counter()
    mem, top = _assemble_for_query(
        model, compiled.store, compiled.passage_matrix,
        compiled.passage_fact_ids, query_text,
    )
    record = model.generate(
        query_text, mem, max_new_tokens=max_new_tokens, mode=mode,
        temperature=temperature, seed=seed,
    )
    return PathResult(
        record=record, memory=mem, passage_ids=top,
        seconds=time.perf_counter() - t0,
    )


def answer_cold(
    model: Model,
    doc_id: str,
    text: str,
    sentences: Iterable[ParsedSentence],
    query_text: str,
    max_new_tokens: int = 24,
    mode: str = "greedy",
    temperature: float = 1.0,
    seed: int = 0,
) -> PathResult:
    """Answer a never-compiled document: extract facts only from the
    passages that match the query, into a transient store."""
    t0 = time.perf_counter()
    passages = chunk_document(text)
    matrix = embed_passages(model, passages)
    ordered = _check_sentences(passages, sentences, doc_id, strict=False)
    qvec = model.query_numpy(query_text)
    top = top_passage_ids(matrix, qvec)
    by_passage: dict[int, list[ParsedSentence]] = {}
    for sent in ordered:
        by_passage.setdefault(sent.passage_id, []).append(sent)
    store = MemoryStore(model.config.memory_dim)
    weights = model.extractor_weights()
    pooled: list[list[int]] = []
    for pid in top:
        ids: list[int] = []
        for sent in by_passage.get(pid, []):
            try:
                facts = extract_facts(sent, weights)
            except DataFormatError as exc:
                warnings.warn(
                    f"skipping sentence p{pid}/s{sent.sent_id}: {exc}",
                    stacklevel=2,
                )
                continue
            ids.extend(store.add_with_ids(facts))
        pooled.append(list(dict.fromkeys(ids)))
    if len(store) == 0:
        mem = MemoryMatrix.empty(store.dim)
    else:
        mem = assemble_memory(store, make_query(qvec, query_text), pooled)
    record = model.generate(
        query_text, mem, max_new_tokens=max_new_tokens, mode=mode,
        temperature=temperature, seed=seed,
    )
    return PathResult(
        record=record, memory=mem, passage_ids=top,
        seconds=time.perf_counter() - t0,
    )
