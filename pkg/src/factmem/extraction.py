"""Turn dependency-parsed sentences into (subject, relation, object) facts.

Inputs are ParsedSentence records (JSONL produced by a parsing tool or by the
templates under tests/data). Span selection is rule-based over dependency
relations; each selected span is encoded by a Child-Sum tree LSTM over the
span's dependency structure, projected to a third of the memory width, and the
three projections concatenated into one memory row. Facts carry provenance
(doc, passage, sentence, character offsets) and, when the object looks like a
measurement, a unit-normalized numeric payload.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import tensor as T
from .errors import DataFormatError, ShapeError, UsageError

ROOT_HEAD = -1

SUBJECT_DEPS = ("nsubj", "nsubjpass")
OBJECT_DEPS = ("dobj", "attr", "pobj", "oprd")
RELATION_CHILD_DEPS = ("aux", "auxpass", "neg", "prt")
NOUNISH_POS = ("NOUN", "PROPN", "PRON", "NUM")

HEURISTIC_CONFIDENCE = 0.9
FALLBACK_CONFIDENCE = 0.5


# ---------------------------------------------------------------------------
# parsed-sentence model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    text: str
    lemma: str
    pos: str
    head: int
    deprel: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class ParsedSentence:
    """One dependency-parsed sentence.

    head == -1 marks the root token. char offsets inside tokens are relative
    to raw_text; char_start/char_end place raw_text inside its passage.
    """

    doc_id: str
    passage_id: int
    sent_id: int
    tokens: tuple[Token, ...]
    raw_text: str
    char_start: int = 0
    char_end: int = -1

    def __post_init__(self) -> None:
        if self.char_end == -1:
            object.__setattr__(self, "char_end", self.char_start + len(self.raw_text))
        self._validate()

    def _validate(self) -> None:
        tag = f"{self.doc_id}/p{self.passage_id}/s{self.sent_id}"
        n = len(self.tokens)
        if n == 0:
            raise DataFormatError(f"sentence {tag} has no tokens")
        roots = [i for i, t in enumerate(self.tokens) if t.head == ROOT_HEAD]
        if len(roots) != 1:
            raise DataFormatError(f"sentence {tag} has {len(roots)} roots, wants 1")
        # every token must reach the root without a cycle
        for i in range(n):
            seen = set()
            j = i
            while j != ROOT_HEAD:
                if j in seen or not 0 <= j < n:
                    raise DataFormatError(f"sentence {tag}: head chain broken at token {i}")
                seen.add(j)
                j = self.tokens[j].head
        prev_end = 0
        for i, t in enumerate(self.tokens):
            if not (0 <= t.char_start < t.char_end <= len(self.raw_text)):
                raise DataFormatError(f"sentence {tag}: token {i} offsets out of range")
            if t.char_start < prev_end:
                raise DataFormatError(f"sentence {tag}: token {i} overlaps previous token")
            if self.raw_text[t.char_start : t.char_end] != t.text:
                raise DataFormatError(f"sentence {tag}: token {i} text/offset mismatch")
            prev_end = t.char_end

    def children_of(self, idx: int) -> list[int]:
        return [i for i, t in enumerate(self.tokens) if t.head == idx]

    def subtree(self, idx: int) -> list[int]:
        """All descendants of idx including idx, in token order."""
        out = [idx]
        stack = [idx]
        while stack:
            j = stack.pop()
            for c in self.children_of(j):
                out.append(c)
                stack.append(c)
        return sorted(out)

    def span_text(self, start: int, stop: int) -> str:
        return self.raw_text[
            self.tokens[start].char_start : self.tokens[stop - 1].char_end
        ]


def sentence_from_json(obj: dict) -> ParsedSentence:
    try:
        tokens = tuple(
            Token(
                text=t["text"],
                lemma=t["lemma"],
                pos=t["pos"],
                head=int(t["head"]),
                deprel=t["deprel"],
                char_start=int(t["char_start"]),
                char_end=int(t["char_end"]),
            )
            for t in obj["tokens"]
        )
        return ParsedSentence(
            doc_id=obj["doc_id"],
            passage_id=int(obj["passage_id"]),
            sent_id=int(obj["sent_id"]),
            tokens=tokens,
            raw_text=obj["raw_text"],
            char_start=int(obj.get("char_start", 0)),
            char_end=int(obj.get("char_end", -1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed parsed-sentence record: {exc}") from exc


def sentence_to_json(s: ParsedSentence) -> dict:
    return {
        "doc_id": s.doc_id,
        "passage_id": s.passage_id,
        "sent_id": s.sent_id,
        "raw_text": s.raw_text,
        "char_start": s.char_start,
        "char_end": s.char_end,
        "tokens": [
            {
                "text": t.text,
                "lemma": t.lemma,
                "pos": t.pos,
                "head": t.head,
                "deprel": t.deprel,
                "char_start": t.char_start,
                "char_end": t.char_end,
            }
            for t in s.tokens
        ],
    }


def read_parse_jsonl(path: str | Path) -> list[ParsedSentence]:
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            sentences.append(sentence_from_json(obj))
    return sentences


def write_parse_jsonl(path: str | Path, sentences: Iterable[ParsedSentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps(sentence_to_json(s), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# span selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpanSelection:
    """Token-index ranges [start, stop) for the three fact roles.

    Non-contiguous role token sets (verb + detached particle) are covered by
    their min..max range.
    """

    subject: tuple[int, int]
    relation: tuple[int, int]
    object: tuple[int, int]
    method: str  # "dependency-heuristic" | "fallback"

    def __post_init__(self) -> None:
        for name, (a, b) in (
            ("subject", self.subject),
            ("relation", self.relation),
            ("object", self.object),
        ):
            if b <= a:
                raise UsageError(f"{name} span is empty")


def _dep(t: Token) -> str:
    return t.deprel.lower()


def _is_verb(t: Token) -> bool:
    return t.pos in ("VERB", "AUX") and _dep(t) not in ("aux", "auxpass", "amod")


def _cover(indices: Sequence[int]) -> tuple[int, int]:
    return (min(indices), max(indices) + 1)


def _find_object(sent: ParsedSentence, verb: int) -> tuple[int | None, int | None]:
    """(object head index, preposition index or None), per the search order."""
    kids = sent.children_of(verb)
    for rel in ("dobj", "attr"):
        for c in kids:
            if _dep(sent.tokens[c]) == rel:
                return c, None
    for c in kids:
        if _dep(sent.tokens[c]) == "prep":
            for gc in sent.children_of(c):
                if _dep(sent.tokens[gc]) == "pobj":
                    return gc, c
    for c in kids:
        if _dep(sent.tokens[c]) == "oprd":
            return c, None
    return None, None


def select_spans(sentence: ParsedSentence) -> list[SpanSelection]:
    """Subject/relation/object token ranges for each clause.

    A clause is anchored on a main verb. The primary rule requires an
    explicit subject dependent; when no verb carries one, a fallback picks
    the nearest noun on each side of the root verb (imperatives, which have
    no preceding noun, reuse the verb range as the subject placeholder).
    Sentences with no verb, or nothing noun-like to anchor on, yield [].
    """
    selections: list[SpanSelection] = []
    verbs = [i for i, t in enumerate(sentence.tokens) if _is_verb(t)]
    for v in verbs:
        subj = next(
            (
                c
                for c in sentence.children_of(v)
                if _dep(sentence.tokens[c]) in SUBJECT_DEPS
            ),
            None,
        )
        if subj is None:
            continue
        obj, prep = _find_object(sentence, v)
        if obj is None:
            continue
        rel_tokens = [v] + [
            c
            for c in sentence.children_of(v)
            if _dep(sentence.tokens[c]) in RELATION_CHILD_DEPS
        ]
        if prep is not None:
            rel_tokens.append(prep)
        selections.append(
            SpanSelection(
                subject=_cover(sentence.subtree(subj)),
                relation=_cover(rel_tokens),
                object=_cover(sentence.subtree(obj)),
                method="dependency-heuristic",
            )
        )
    if selections:
        return selections

    # fallback around the root verb
    root = next(i for i, t in enumerate(sentence.tokens) if t.head == ROOT_HEAD)
    if not _is_verb(sentence.tokens[root]):
        return []
    before = [
        i for i in range(root) if sentence.tokens[i].pos in NOUNISH_POS
    ]
    after = [
        i
        for i in range(root + 1, len(sentence.tokens))
        if sentence.tokens[i].pos in NOUNISH_POS
    ]
    if not after:
        return []
    obj = after[0]
    obj_span = _cover(sentence.subtree(obj))
    rel_span = (root, root + 1)
    if before:
        subj_span = _cover(sentence.subtree(before[-1]))
    else:
        # imperative: no overt subject, reuse the verb span
        subj_span = rel_span
    return [
        SpanSelection(
            subject=subj_span,
            relation=rel_span,
            object=obj_span,
            method="fallback",
        )
    ]


# ---------------------------------------------------------------------------
# tree LSTM span encoder
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    """A span token and its in-span dependency children."""

    token_index: int
    token_id: int
    children: list["TreeNode"] = field(default_factory=list)


def build_span_tree(
    sentence: ParsedSentence,
    span: tuple[int, int],
    token_ids: Sequence[int],
    root_hint: int | None = None,
) -> TreeNode:
    """Dependency tree restricted to span tokens.

    Tokens whose head lies outside the span attach to the span root (the
    token on the root path, or root_hint when given).
    """
    start, stop = span
    members = list(range(start, stop))
    if not members:
        raise UsageError("empty span")
    nodes = {i: TreeNode(i, token_ids[i - start]) for i in members}
    inside = set(members)
    orphans = [
        i for i in members if sentence.tokens[i].head not in inside
    ]
    if root_hint is not None and root_hint in inside:
        root = root_hint
    else:
        root = orphans[0]
    for i in members:
        h = sentence.tokens[i].head
        if i == root:
            continue
        parent = h if h in inside else root
        nodes[parent].children.append(nodes[i])
    return nodes[root]


@dataclass
class TreeLstmWeights:
    """Gate weights for the Child-Sum tree LSTM, all width dim.

    Matrices are stored row-vector style: a 1 x dim input row multiplies
    them on the left.
    """

    dim: int
    w_i: T.Tensor
    u_i: T.Tensor
    b_i: T.Tensor
    w_f: T.Tensor
    u_f: T.Tensor
    b_f: T.Tensor
    w_o: T.Tensor
    u_o: T.Tensor
    b_o: T.Tensor
    w_u: T.Tensor
    u_u: T.Tensor
    b_u: T.Tensor

    GATES = ("i", "f", "o", "u")

    @classmethod
    def create(
        cls, params: T.ParameterSet, prefix: str, dim: int, rng: np.random.Generator
    ) -> "TreeLstmWeights":
        kw = {"dim": dim}
        for gate in cls.GATES:
            kw[f"w_{gate}"] = params.register(
                f"{prefix}.w_{gate}", rng.normal(0.0, 0.02, (dim, dim))
            ).tensor
            kw[f"u_{gate}"] = params.register(
                f"{prefix}.u_{gate}", rng.normal(0.0, 0.02, (dim, dim))
            ).tensor
            kw[f"b_{gate}"] = params.register(
                f"{prefix}.b_{gate}", np.zeros(dim)
            ).tensor
        return cls(**kw)

    @classmethod
    def from_params(cls, params: T.ParameterSet, prefix: str, dim: int) -> "TreeLstmWeights":
        kw = {"dim": dim}
        for gate in cls.GATES:
            kw[f"w_{gate}"] = params[f"{prefix}.w_{gate}"].tensor
            kw[f"u_{gate}"] = params[f"{prefix}.u_{gate}"].tensor
            kw[f"b_{gate}"] = params[f"{prefix}.b_{gate}"].tensor
        return cls(**kw)


def _encode_node(
    node: TreeNode, weights: TreeLstmWeights, embedding: T.Tensor
) -> tuple[T.Tensor, T.Tensor]:
    """Returns (h, c), each 1 x dim. Child order cannot matter: children
    enter only through sums."""
    x = T.gather_rows(embedding, [node.token_id])
    child_states = [_encode_node(c, weights, embedding) for c in node.children]

    def gate(w: T.Tensor, u: T.Tensor, b: T.Tensor, h_in: T.Tensor | None) -> T.Tensor:
        z = T.add(T.matmul(x, w), b)
        if h_in is not None:
            z = T.add(z, T.matmul(h_in, u))
        return z

    if child_states:
        h_sum = child_states[0][0]
        for h_k, _ in child_states[1:]:
            h_sum = T.add(h_sum, h_k)
    else:
        h_sum = None

    i = T.sigmoid(gate(weights.w_i, weights.u_i, weights.b_i, h_sum))
    o = T.sigmoid(gate(weights.w_o, weights.u_o, weights.b_o, h_sum))
    u = T.tanh(gate(weights.w_u, weights.u_u, weights.b_u, h_sum))
    c = T.mul(i, u)
    for h_k, c_k in child_states:
        f_k = T.sigmoid(gate(weights.w_f, weights.u_f, weights.b_f, h_k))
        c = T.add(c, T.mul(f_k, c_k))
    h = T.mul(o, T.tanh(c))
    return h, c


def encode_span(
    tree: TreeNode, weights: TreeLstmWeights, embedding: T.Tensor
) -> T.Tensor:
    """Root hidden state of the span tree, 1 x dim."""
    if tree is None:
        raise UsageError("encode_span needs a non-empty tree")
    h, _ = _encode_node(tree, weights, embedding)
    return h


# ---------------------------------------------------------------------------
# fact projection
# ---------------------------------------------------------------------------


@dataclass
class FactProjection:
    """Per-role linear + GELU heads mapping span encodings to memory thirds."""

    in_dim: int
    out_dim: int
    w_s: T.Tensor
    b_s: T.Tensor
    w_r: T.Tensor
    b_r: T.Tensor
    w_o: T.Tensor
    b_o: T.Tensor

    ROLES = ("s", "r", "o")

    @classmethod
    def create(
        cls,
        params: T.ParameterSet,
        prefix: str,
        in_dim: int,
        out_dim: int,
        rng: np.random.Generator,
    ) -> "FactProjection":
        kw = {"in_dim": in_dim, "out_dim": out_dim}
        for role in cls.ROLES:
            kw[f"w_{role}"] = params.register(
                f"{prefix}.w_{role}", rng.normal(0.0, 0.02, (in_dim, out_dim))
            ).tensor
            kw[f"b_{role}"] = params.register(
                f"{prefix}.b_{role}", np.zeros(out_dim)
            ).tensor
        return cls(**kw)

    @classmethod
    def from_params(
        cls, params: T.ParameterSet, prefix: str, in_dim: int, out_dim: int
    ) -> "FactProjection":
        kw = {"in_dim": in_dim, "out_dim": out_dim}
        for role in cls.ROLES:
            kw[f"w_{role}"] = params[f"{prefix}.w_{role}"].tensor
            kw[f"b_{role}"] = params[f"{prefix}.b_{role}"].tensor
        return cls(**kw)


def project_fact(
    h_s: T.Tensor, h_r: T.Tensor, h_o: T.Tensor, proj: FactProjection
) -> tuple[T.Tensor, T.Tensor, T.Tensor, T.Tensor]:
    """(v_s, v_r, v_o, m) where v = GELU(h W + b) and m = [v_s | v_r | v_o]."""
    for name, h in (("h_s", h_s), ("h_r", h_r), ("h_o", h_o)):
        if h.shape != (1, proj.in_dim):
            raise ShapeError(
                f"{name} must be 1 x {proj.in_dim}, got {h.shape}"
            )
    v_s = T.gelu(T.add(T.matmul(h_s, proj.w_s), proj.b_s))
    v_r = T.gelu(T.add(T.matmul(h_r, proj.w_r), proj.b_r))
    v_o = T.gelu(T.add(T.matmul(h_o, proj.w_o), proj.b_o))
    m = T.concat_cols([v_s, v_r, v_o])
    return v_s, v_r, v_o, m


# ---------------------------------------------------------------------------
# numeric normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NumericPayload:
    """Measurement in SI base units; percent becomes a dimensionless fraction."""

    values: tuple[float, ...]
    unit: str
    is_range: bool


# unit -> (base unit, multiplier)
_UNIT_TABLE = {
    "V": ("V", 1.0),
    "kV": ("V", 1e3),
    "mV": ("V", 1e-3),
    "A": ("A", 1.0),
    "mA": ("A", 1e-3),
    "kA": ("A", 1e3),
    "Hz": ("Hz", 1.0),
    "kHz": ("Hz", 1e3),
    "s": ("s", 1.0),
    "ms": ("s", 1e-3),
    "°C": ("°C", 1.0),
    "%": ("", 1e-2),
    "Ω": ("Ω", 1.0),
    "kΩ": ("Ω", 1e3),
    "W": ("W", 1.0),
    "kW": ("W", 1e3),
}

_NUM = r"[+-]?\d+(?:\.\d+)?"
_UNIT_ALT = "|".join(
    re.escape(u) for u in sorted(_UNIT_TABLE, key=len, reverse=True)
)
_RANGE_SEP = r"(?:\s*–\s*|\s*-\s*|\s+to\s+)"
_NUMERIC_RE = re.compile(
    rf"^({_NUM})(?:{_RANGE_SEP}({_NUM}))?\s*({_UNIT_ALT})$"
)
_ARTICLE_RE = re.compile(r"^(?:the|a|an)\s+", re.IGNORECASE)


def normalize_numeric(object_text: str) -> NumericPayload | None:
    """Parse '<num> <unit>' or '<num>-<num> <unit>' into SI base units.

    Anything else returns None; this is a best-effort annotation, never an
    error.
    """
    text = _ARTICLE_RE.sub("", object_text.strip()).rstrip(".,;:")
    match = _NUMERIC_RE.match(text)
    if match is None:
        return None
    lo_s, hi_s, unit = match.group(1), match.group(2), match.group(3)
    base, mult = _UNIT_TABLE[unit]
    lo = float(lo_s) * mult
    if hi_s is None:
        return NumericPayload(values=(lo,), unit=base, is_range=False)
    hi = float(hi_s) * mult
    lo, hi = min(lo, hi), max(lo, hi)
    return NumericPayload(values=(lo, hi), unit=base, is_range=True)


# ---------------------------------------------------------------------------
# fact assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpanProvenance:
    role: str
    text: str
    char_start: int  # passage-relative
    char_end: int


@dataclass(frozen=True)
class Provenance:
    doc_id: str
    passage_id: int
    sent_id: int
    char_start: int  # envelope over the three spans, passage-relative
    char_end: int
    spans: tuple[SpanProvenance, ...]


@dataclass(frozen=True)
class FactTriple:
    subject_text: str
    relation_text: str
    object_text: str
    v_s: np.ndarray  # float32, memory_dim // 3
    v_r: np.ndarray
    v_o: np.ndarray
    m: np.ndarray  # float32, concatenation of the three
    confidence: float
    numeric: NumericPayload | None
    provenance: Provenance


@dataclass
class ExtractorWeights:
    """Everything extraction needs: tree LSTM, projections, embedding table."""

    tree: TreeLstmWeights
    projection: FactProjection
    embedding: T.Tensor
    encode_token: Callable[[str], int]  # token text -> embedding row id

    def __post_init__(self) -> None:
        if self.projection.in_dim != self.tree.dim:
            raise ShapeError("projection input width must match tree LSTM width")


def fact_structures(
    sentence: ParsedSentence, token_id_of
) -> list[tuple[SpanSelection, TreeNode, TreeNode, TreeNode]]:
    """Span selections plus their three span trees (weight-independent)."""
    out = []
    for sel in select_spans(sentence):
        trees = []
        for span in (sel.subject, sel.relation, sel.object):
            start, stop = span
            ids = [
                token_id_of(sentence.tokens[i].text) for i in range(start, stop)
            ]
            trees.append(build_span_tree(sentence, span, ids))
        out.append((sel, trees[0], trees[1], trees[2]))
    return out


def extract_facts(
    sentence: ParsedSentence, weights: ExtractorWeights
) -> list[FactTriple]:
    """Full extraction for one sentence; deterministic given weights."""
    facts: list[FactTriple] = []
    for sel, t_s, t_r, t_o in fact_structures(sentence, weights.encode_token):
        with T.no_grad():
            h_s = encode_span(t_s, weights.tree, weights.embedding)
            h_r = encode_span(t_r, weights.tree, weights.embedding)
            h_o = encode_span(t_o, weights.tree, weights.embedding)
            v_s, v_r, v_o, _ = project_fact(h_s, h_r, h_o, weights.projection)
        facts.append(
            assemble_fact(sentence, sel, v_s.data[0], v_r.data[0], v_o.data[0])
        )
    return facts


def assemble_fact(
    sentence: ParsedSentence,
    sel: SpanSelection,
    v_s: np.ndarray,
    v_r: np.ndarray,
    v_o: np.ndarray,
) -> FactTriple:
    """Package projected vectors with texts, confidence, and provenance."""
    texts = {}
    spans = []
    base = sentence.char_start
    for role, (a, b) in (
        ("subject", sel.subject),
        ("relation", sel.relation),
        ("object", sel.object),
    ):
        text = sentence.span_text(a, b)
        texts[role] = text
        spans.append(
            SpanProvenance(
                role=role,
                text=text,
                char_start=base + sentence.tokens[a].char_start,
                char_end=base + sentence.tokens[b - 1].char_end,
            )
        )
    v_s32 = v_s.astype(np.float32)
    v_r32 = v_r.astype(np.float32)
    v_o32 = v_o.astype(np.float32)
    return FactTriple(
        subject_text=texts["subject"],
        relation_text=texts["relation"],
        object_text=texts["object"],
        v_s=v_s32,
        v_r=v_r32,
        v_o=v_o32,
        m=np.concatenate([v_s32, v_r32, v_o32]),
        confidence=(
            HEURISTIC_CONFIDENCE
            if sel.method == "dependency-heuristic"
            else FALLBACK_CONFIDENCE
        ),
        numeric=normalize_numeric(texts["object"]),
        provenance=Provenance(
            doc_id=sentence.doc_id,
            passage_id=sentence.passage_id,
            sent_id=sentence.sent_id,
            char_start=min(s.char_start for s in spans),
            char_end=max(s.char_end for s in spans),
            spans=tuple(spans),
        ),
    )


# ---------------------------------------------------------------------------
# fact-table JSONL
# ---------------------------------------------------------------------------


def fact_to_json(fact: FactTriple) -> dict:
    return {
        "subject": fact.subject_text,
        "relation": fact.relation_text,
        "object": fact.object_text,
        "v_s": [float(x) for x in fact.v_s],
        "v_r": [float(x) for x in fact.v_r],
        "v_o": [float(x) for x in fact.v_o],
        "m": [float(x) for x in fact.m],
        "confidence": fact.confidence,
        "numeric": (
            None
            if fact.numeric is None
            else {
                "values": list(fact.numeric.values),
                "unit": fact.numeric.unit,
                "is_range": fact.numeric.is_range,
            }
        ),
        "provenance": {
            "doc_id": fact.provenance.doc_id,
            "passage_id": fact.provenance.passage_id,
            "sent_id": fact.provenance.sent_id,
            "char_start": fact.provenance.char_start,
            "char_end": fact.provenance.char_end,
            "spans": [
                {
                    "role": s.role,
                    "text": s.text,
                    "char_start": s.char_start,
                    "char_end": s.char_end,
                }
                for s in fact.provenance.spans
            ],
        },
    }


def fact_from_json(obj: dict) -> FactTriple:
    try:
        numeric = obj["numeric"]
        payload = (
            None
            if numeric is None
            else NumericPayload(
                values=tuple(float(v) for v in numeric["values"]),
                unit=numeric["unit"],
                is_range=bool(numeric["is_range"]),
            )
        )
        prov = obj["provenance"]
        return FactTriple(
            subject_text=obj["subject"],
            relation_text=obj["relation"],
            object_text=obj["object"],
            v_s=np.asarray(obj["v_s"], dtype=np.float32),
            v_r=np.asarray(obj["v_r"], dtype=np.float32),
            v_o=np.asarray(obj["v_o"], dtype=np.float32),
            m=np.asarray(obj["m"], dtype=np.float32),
            confidence=float(obj["confidence"]),
            numeric=payload,
            provenance=Provenance(
                doc_id=prov["doc_id"],
                passage_id=int(prov["passage_id"]),
                sent_id=int(prov["sent_id"]),
                char_start=int(prov["char_start"]),
                char_end=int(prov["char_end"]),
                spans=tuple(
                    SpanProvenance(
                        role=s["role"],
                        text=s["text"],
                        char_start=int(s["char_start"]),
                        char_end=int(s["char_end"]),
                    )
                    for s in prov["spans"]
                ),
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed fact record: {exc}") from exc


def write_facts_jsonl(path: str | Path, facts: Iterable[FactTriple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for fact in facts:
            fh.write(json.dumps(fact_to_json(fact), ensure_ascii=False) + "\n")


def read_facts_jsonl(path: str | Path) -> list[FactTriple]:
    facts = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                facts.append(fact_from_json(json.loads(line)))
    return facts
