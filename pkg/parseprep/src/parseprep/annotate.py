"""Sentence splitting, tokenization, tagging, and dependency attachment.

The pipeline is rule-based and deterministic. Tags follow the universal
POS inventory; dependency labels follow the common English scheme the
downstream extractor consumes (nsubj/dobj/pobj/attr, det/amod/nummod,
prep, aux/auxpass, advmod, conj/cc, punct, with dep as the fallback).
Character offsets always slice the source text to exactly the token.
"""

from __future__ import annotations

import re

from .lexicon import (
    ADJ_SUFFIXES,
    ADJECTIVES,
    ADVERBS,
    AUXILIARIES,
    COORDINATORS,
    DETERMINERS,
    IRREGULAR_VERBS,
    NUMBER_WORDS,
    PARTICLES,
    PREPOSITIONS,
    PRONOUNS,
    SUBORDINATORS,
    VERB_STEMS,
)

ROOT = -1

NOMINAL_TAGS = ("NOUN", "PROPN", "PRON", "NUM")
BE_FORMS = frozenset("is are was were be been being am".split())
MODIFIER_BOUNDARY = ("VERB", "AUX", "ADP", "PUNCT", "CCONJ", "SCONJ")

_TOKEN_RE = re.compile(r"\d+(?:\.\d+)?|[A-Za-z]+(?:'[A-Za-z]+)?|[^\sA-Za-z0-9]")
_NUMERIC_RE = re.compile(r"\d+(?:\.\d+)?$")


# ---------------------------------------------------------------------------
# sentence splitting and tokenization
# ---------------------------------------------------------------------------


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences, ends trimmed of whitespace.

    A sentence ends at ./!/? (plus any closing quotes or brackets) or at a
    blank line. Periods inside decimal numbers do not split. Abbreviation
    detection is deliberately out of scope; the rule is simple and stable.
    """
    spans: list[tuple[int, int]] = []
    n = len(text)
    start: int | None = None
    i = 0
    while i < n:
        ch = text[i]
        if start is None:
            if not ch.isspace():
                start = i
            i += 1
            continue
        if ch in ".!?":
            decimal = (
                ch == "."
                and 0 < i < n - 1
                and text[i - 1].isdigit()
                and text[i + 1].isdigit()
            )
            if not decimal:
                j = i + 1
                while j < n and text[j] in "\"')]":
                    j += 1
                spans.append((start, j))
                start = None
                i = j
                continue
        if ch == "\n" and i + 1 < n and text[i + 1] == "\n":
            spans.append((start, i))
            start = None
        i += 1
    if start is not None:
        spans.append((start, n))
    out = []
    for s, e in spans:
        while e > s and text[e - 1].isspace():
            e -= 1
        if e > s:
            out.append((s, e))
    return out


def tokenize(raw: str) -> list[tuple[str, int, int]]:
    """(text, char_start, char_end) per token; offsets index into raw."""
    return [(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(raw)]


# ---------------------------------------------------------------------------
# tagging and lemmas
# ---------------------------------------------------------------------------


def _verb_stem(lw: str) -> str | None:
    if lw in IRREGULAR_VERBS:
        return IRREGULAR_VERBS[lw]
    if lw in VERB_STEMS:
        return lw
    for suffix in ("ies", "es", "s", "ing", "ed"):
        if not lw.endswith(suffix) or len(lw) <= len(suffix) + 1:
            continue
        stem = lw[: -len(suffix)]
        if suffix == "ies":
            stem += "y"
        candidates = [stem, stem + "e"]
        if len(stem) > 2 and stem[-1] == stem[-2]:
            candidates.append(stem[:-1])
        for cand in candidates:
            if cand in VERB_STEMS:
                return cand
    return None


def _prev_effective(tags: list[str]) -> str | None:
    for tag in reversed(tags):
        if tag not in ("ADV", "PART"):
            return tag
    return None


def _starts_noun_phrase(texts: list[str], j: int) -> bool:
    if j >= len(texts):
        return False
    lw = texts[j].lower()
    return (
        lw in DETERMINERS
        or lw in PRONOUNS
        or lw in NUMBER_WORDS
        or lw[0].isdigit()
    )


def _tag_one(texts: list[str], i: int, tags: list[str]) -> str:
    text = texts[i]
    lw = text.lower()
    if not any(c.isalnum() for c in text):
        return "PUNCT"
    if _NUMERIC_RE.fullmatch(text) or lw in NUMBER_WORDS:
        return "NUM"
    # a short capitalized token right after a number is a unit symbol
    if i > 0 and tags[i - 1] == "NUM" and text[0].isupper() and len(text) <= 3:
        return "PROPN"
    if lw in DETERMINERS:
        return "DET"
    if lw in PREPOSITIONS:
        return "ADP"
    if lw in AUXILIARIES:
        return "AUX"
    if lw in PRONOUNS:
        return "PRON"
    if lw in COORDINATORS:
        return "CCONJ"
    if lw in SUBORDINATORS:
        return "SCONJ"
    if lw in PARTICLES:
        return "PART"
    if lw in ADVERBS:
        return "ADV"
    if _verb_stem(lw) is not None:
        prev = _prev_effective(tags)
        bare = lw in VERB_STEMS or lw in IRREGULAR_VERBS
        if prev in ("DET", "NUM"):
            return "ADJ" if lw in ADJECTIVES else "NOUN"
        if prev == "ADJ":
            return "NOUN"
        if prev == "AUX" and bare and lw in ADJECTIVES:
            # raw stem after a be-form reads as a predicate adjective
            return "ADJ"
        if prev in ("NOUN", "PROPN", "PRON") and bare:
            # a bare stem after a noun is a compound noun ("cooling loop")
            # unless the clause still needs a verb and an object follows
            if "VERB" in tags or not _starts_noun_phrase(texts, i + 1):
                return "NOUN"
        return "VERB"
    if lw.endswith("ly") and len(lw) > 3:
        return "ADV"
    if lw in ADJECTIVES or lw.endswith(ADJ_SUFFIXES):
        return "ADJ"
    if i > 0 and text[0].isupper():
        return "PROPN"
    return "NOUN"


def tag_tokens(texts: list[str]) -> list[str]:
    tags: list[str] = []
    for i in range(len(texts)):
        tags.append(_tag_one(texts, i, tags))
    return tags


def _noun_singular(lw: str) -> str:
    if len(lw) > 4 and lw.endswith("ies"):
        return lw[:-3] + "y"
    for suffix in ("ses", "xes", "zes", "ches", "shes"):
        if len(lw) > len(suffix) + 1 and lw.endswith(suffix):
            return lw[:-2]
    if len(lw) > 3 and lw.endswith("s") and not lw.endswith("ss"):
        return lw[:-1]
    return lw


def lemma_of(text: str, pos: str) -> str:
    lw = text.lower()
    if pos == "PUNCT":
        return text
    if pos in ("VERB", "AUX"):
        return _verb_stem(lw) or lw
    if pos == "NOUN":
        return _noun_singular(lw)
    return lw


# ---------------------------------------------------------------------------
# dependency attachment
# ---------------------------------------------------------------------------


def _find_root(tags: list[str]) -> int:
    for wanted in (("VERB",), ("AUX",), ("NOUN", "PROPN")):
        for i, tag in enumerate(tags):
            if tag in wanted:
                return i
    return 0


def attach(texts: list[str], tags: list[str]) -> tuple[list[int], list[str]]:
    """Heads (index, -1 for root) and dependency labels for one sentence."""
    n = len(texts)
    heads = [ROOT] * n
    rels = ["dep"] * n
    root = _find_root(tags)
    rels[root] = "root"
    assigned = [False] * n
    assigned[root] = True

    lws = [t.lower() for t in texts]
    passive = (
        tags[root] == "VERB"
        and (lws[root].endswith("ed") or lws[root] in IRREGULAR_VERBS)
        and any(tags[i] == "AUX" and lws[i] in BE_FORMS for i in range(root))
    )

    def settle(i: int, head: int, rel: str) -> None:
        heads[i] = head
        rels[i] = rel
        assigned[i] = True

    # determiners, attributive adjectives, and unit counts modify the next
    # nominal before any clause boundary
    for i in range(n):
        if assigned[i] or tags[i] not in ("DET", "ADJ", "NUM"):
            continue
        if tags[i] == "NUM":
            if i + 1 < n and tags[i + 1] in ("NOUN", "PROPN"):
                settle(i, i + 1, "nummod")
            continue
        for j in range(i + 1, n):
            if tags[j] in MODIFIER_BOUNDARY:
                break
            if tags[j] in ("NOUN", "PROPN"):
                settle(i, j, "det" if tags[i] == "DET" else "amod")
                break

    # runs of adjacent bare nouns compound onto the final noun of the run
    i = 0
    while i < n:
        if assigned[i] or tags[i] not in ("NOUN", "PROPN"):
            i += 1
            continue
        j = i
        while (
            j + 1 < n
            and not assigned[j + 1]
            and tags[j + 1] in ("NOUN", "PROPN")
        ):
            j += 1
        for k in range(i, j):
            settle(k, j, "compound")
        i = j + 1

    # prepositions hang off the root; each takes the next free nominal
    for i in range(n):
        if tags[i] != "ADP" or assigned[i]:
            continue
        settle(i, root, "prep")
        for j in range(i + 1, n):
            if tags[j] in ("ADP", "VERB", "AUX", "PUNCT"):
                break
            if tags[j] in NOMINAL_TAGS and not assigned[j]:
                settle(j, i, "pobj")
                break

    subject_rel = "nsubjpass" if passive else "nsubj"
    subject = None
    for i in range(root):
        if tags[i] in NOMINAL_TAGS and not assigned[i]:
            subject = i
            settle(i, root, subject_rel)
            break
    for i in range((subject if subject is not None else 0) + 1, root):
        if tags[i] in NOMINAL_TAGS and not assigned[i]:
            cc = None if subject is None else _cc_between(tags, assigned, subject, i)
            if cc is not None:
                settle(cc, subject, "cc")
                settle(i, subject, "conj")
            else:
                settle(i, root, "dep")

    copular = tags[root] == "AUX" or lws[root] in BE_FORMS
    obj = None
    for i in range(root + 1, n):
        if tags[i] in NOMINAL_TAGS and not assigned[i]:
            obj = i
            settle(i, root, "attr" if copular else "dobj")
            break
    for i in range((obj if obj is not None else root) + 1, n):
        if tags[i] in NOMINAL_TAGS and not assigned[i]:
            cc = None if obj is None else _cc_between(tags, assigned, obj, i)
            if cc is not None:
                settle(cc, obj, "cc")
                settle(i, obj, "conj")
            else:
                settle(i, root, "dep")
    if obj is None and copular:
        for i in range(root + 1, n):
            if tags[i] == "ADJ" and not assigned[i]:
                settle(i, root, "attr")
                break

    for i in range(n):
        if assigned[i]:
            continue
        tag = tags[i]
        if tag == "ADV":
            settle(i, root, "advmod")
        elif tag == "AUX":
            settle(i, root, "auxpass" if passive and lws[i] in BE_FORMS else "aux")
        elif tag == "PART":
            settle(i, root, "neg" if lws[i] in ("not", "n't") else "prt")
        elif tag == "SCONJ":
            settle(i, root, "mark")
        elif tag == "CCONJ":
            settle(i, root, "cc")
        elif tag == "PUNCT":
            settle(i, root, "punct")
        else:
            settle(i, root, "dep")
    return heads, rels


def _cc_between(tags: list[str], assigned: list[bool], a: int, b: int) -> int | None:
    for k in range(a + 1, b):
        if tags[k] == "CCONJ" and not assigned[k]:
            return k
    return None


# ---------------------------------------------------------------------------
# document-level annotation
# ---------------------------------------------------------------------------


def annotate_sentence(
    raw: str, doc_id: str, passage_id: int, sent_id: int, char_start: int
) -> dict | None:
    tokens = tokenize(raw)
    if not tokens:
        return None
    texts = [t[0] for t in tokens]
    tags = tag_tokens(texts)
    heads, rels = attach(texts, tags)
    return {
        "doc_id": doc_id,
        "passage_id": passage_id,
        "sent_id": sent_id,
        "raw_text": raw,
        "char_start": char_start,
        "char_end": char_start + len(raw),
        "tokens": [
            {
                "text": texts[i],
                "lemma": lemma_of(texts[i], tags[i]),
                "pos": tags[i],
                "head": heads[i],
                "deprel": rels[i],
                "char_start": tokens[i][1],
                "char_end": tokens[i][2],
            }
            for i in range(len(tokens))
        ],
    }


def annotate_text(text: str, doc_id: str) -> list[dict]:
    """Whole document as one passage; offsets relative to the document."""
    out = []
    sent_id = 0
    for s, e in split_sentences(text):
        line = annotate_sentence(text[s:e], doc_id, 0, sent_id, s)
        if line is not None:
            out.append(line)
            sent_id += 1
    return out


def annotate_passages(passages: list[dict], doc_id: str) -> list[dict]:
    """One record per sentence per passage; offsets relative to the passage
    text. Output is ordered by passage id, then sentence position."""
    out = []
    for passage in sorted(passages, key=lambda p: int(p["passage_id"])):
        pid = int(passage["passage_id"])
        text = passage["text"]
        sent_id = 0
        for s, e in split_sentences(text):
            line = annotate_sentence(text[s:e], doc_id, pid, sent_id, s)
            if line is not None:
                out.append(line)
                sent_id += 1
    return out
