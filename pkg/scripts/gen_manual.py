"""Regenerate the synthetic maintenance-manual dataset under tests/data/manual.

The manual holds 200 templated sentences describing 50 distinct facts, four
surface variants each. Variants add leading adverbials or a trailing
prepositional tail, both of which stay outside the extracted
subject/relation/object spans, so extraction collapses all four to one
store row. The first variant encountered in document order defines a fact's
gold passage.

Outputs (all deterministic for a fixed seed):
  corpus.txt            the document, one line, plus a preamble
  parses.jsonl          ParsedSentence lines, passage-relative offsets
  train_pairs.jsonl     3 query paraphrases per fact -> gold sentence
  heldout_pairs.jsonl   1 unseen paraphrase per fact
  test_queries.jsonl    1 more paraphrase per fact, with reference answers
  gold.json             per-fact gold spans, tokens, passages, queries

Run from the repository root:  python3 scripts/gen_manual.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from factmem.extraction import ParsedSentence, Token, write_parse_jsonl
from factmem.pipeline import chunk_document

OUT_DIR = Path(__file__).resolve().parent.parent / "tests" / "data" / "manual"
DOC_ID = "manual"
SEED = 20

SUBJECTS = [
    "relay", "breaker", "fuse", "contactor", "inverter", "rectifier",
    "charger", "alternator", "dynamo", "stator", "rotor", "bearing",
    "coupling", "gearbox", "clutch", "brake", "damper", "spring", "piston",
    "cylinder", "manifold", "injector", "burner", "boiler", "condenser",
    "evaporator", "compressor", "turbine", "impeller", "diffuser", "nozzle",
    "valve", "actuator", "solenoid", "sensor", "probe", "gauge",
    "transducer", "encoder", "resolver", "thermostat", "regulator",
    "governor", "strainer", "separator", "scrubber", "blower", "louver",
    "oiler", "primer",
]
VERBS = [
    "trips", "opens", "closes", "engages", "releases", "charges", "drains",
    "fills", "heats", "cools", "spins", "locks", "seals", "vents", "purges",
    "scans", "reads", "drives", "holds", "lifts", "drops", "feeds", "taps",
    "marks", "guards", "links", "loops", "stores", "turns", "powers",
    "moves", "grips", "cuts", "cleans", "checks", "tests", "rates",
    "limits", "boosts", "damps", "meters", "times", "gates", "syncs",
    "tunes", "trims", "loads", "parks", "runs", "idles",
]
UNITS = ["A", "V", "Hz", "ms", "s", "kW", "W", "mA", "kV", "kHz", "mV",
         "kA", "%", "°C", "Ω", "kΩ"]
NUMBERS = [7, 11, 13, 16, 19, 22, 26, 31, 34, 38, 41, 45, 48, 52, 57, 61,
           64, 68, 73, 77, 82, 86, 91, 95, 99]
ADJECTIVES = ["main", "upper", "lower", "inner", "outer"]
OBJECT_NOUNS = [
    "grid", "loop", "rail", "port", "bus", "cell", "core", "lug", "stud",
    "vane", "seat", "stem", "bore", "ring", "hub", "duct", "drum", "tray",
    "sump", "weir", "dome", "cowl", "shroud", "plenum", "riser",
]

PREAMBLE = [
    "this manual lists what value and which setting each unit takes .",
    "read it to learn at what point and level every part acts .",
    "it tells me that and does more .",
]

TRAIN_TEMPLATES = [
    "what value does the {s} {v}",
    "the {s} {v} at what level",
    "tell me the setting that the {s} {v}",
]
HELDOUT_TEMPLATE = "at which point does the {s} {v}"
TEST_TEMPLATE = "at what level does the {s} {v}"

# token spec: (text, lemma, pos, head_relative_label, deprel)
ROOT = "ROOT"


def _numeric_core(subj, verb, number, unit):
    return [
        ("the", "the", "DET", "SUBJ", "det"),
        (subj, subj, "NOUN", "VERB", "nsubj"),
        (verb, verb, "VERB", ROOT, "root"),
        ("at", "at", "ADP", "VERB", "prep"),
        (str(number), str(number), "NUM", "OBJ", "nummod"),
        (unit, unit, "NOUN", "PREP", "pobj"),
    ]


def _dobj_core(subj, verb, adjective, obj):
    return [
        ("the", "the", "DET", "SUBJ", "det"),
        (subj, subj, "NOUN", "VERB", "nsubj"),
        (verb, verb, "VERB", ROOT, "root"),
        ("the", "the", "DET", "OBJ", "det"),
        (adjective, adjective, "ADJ", "OBJ", "amod"),
        (obj, obj, "NOUN", "VERB", "dobj"),
    ]


def _variant_tokens(core, prefix_adverb=None, with_tail=False):
    """Assemble the final token list with absolute head indices."""
    rows = []
    if prefix_adverb:
        rows.append((prefix_adverb, prefix_adverb, "ADV", "VERB", "advmod"))
        rows.append((",", ",", "PUNCT", "VERB", "punct"))
    rows.extend(core)
    if with_tail:
        rows.append(("in", "in", "ADP", "VERB", "prep"))
        rows.append(("normal", "normal", "ADJ", "TAILN", "amod"))
        rows.append(("service", "service", "NOUN", "TAILP", "pobj"))
    rows.append((".", ".", "PUNCT", "VERB", "punct"))

    landmarks = {}
    for i, (text, _, pos, _, deprel) in enumerate(rows):
        if deprel == "root":
            landmarks["VERB"] = i
        elif deprel == "nsubj":
            landmarks["SUBJ"] = i
        elif deprel in ("dobj",) or (deprel == "pobj" and text != "service"):
            landmarks["OBJ"] = i
        elif deprel == "prep" and text == "at":
            landmarks["PREP"] = i
        elif deprel == "prep" and text == "in":
            landmarks["TAILP"] = i
        elif text == "service":
            landmarks["TAILN"] = i
    tokens = []
    cursor = 0
    for text, lemma, pos, head_label, deprel in rows:
        head = -1 if head_label == ROOT else landmarks[head_label]
        tokens.append(Token(text, lemma, pos, head, deprel, cursor,
                            cursor + len(text)))
        cursor += len(text) + 1
    raw = " ".join(t.text for t in tokens)
    return raw, tokens


def build_facts():
    facts = []
    for i in range(50):
        subj = SUBJECTS[i]
        verb = VERBS[i]
        if i < 25:
            number = NUMBERS[i]
            unit = UNITS[i % len(UNITS)]
            core = _numeric_core(subj, verb, number, unit)
            obj_text = f"{number} {unit}"
            obj_token = str(number)
        else:
            adjective = ADJECTIVES[i % len(ADJECTIVES)]
            obj = OBJECT_NOUNS[i - 25]
            core = _dobj_core(subj, verb, adjective, obj)
            obj_text = f"the {adjective} {obj}"
            obj_token = obj
        variants = [
            _variant_tokens(core),
            _variant_tokens(core, prefix_adverb="normally"),
            _variant_tokens(core, with_tail=True),
            _variant_tokens(core, prefix_adverb="typically"),
        ]
        facts.append({
            "index": i,
            "subject": subj,
            "verb": verb,
            "subject_span": f"the {subj}",
            "relation_span": f"{verb} at" if i < 25 else verb,
            "object_span": obj_text,
            "object_token": obj_token,
            "variants": variants,
        })
    return facts


def main() -> None:
    assert len(set(SUBJECTS)) == 50 and len(set(VERBS)) == 50
    assert len(set(OBJECT_NOUNS)) == 25 and len(set(NUMBERS)) == 25
    rng = np.random.default_rng(SEED)
    facts = build_facts()

    slots = [(f["index"], v) for f in facts for v in range(4)]
    order = rng.permutation(len(slots))
    ordered = [slots[int(i)] for i in order]

    pieces = list(PREAMBLE) + [
        facts[fi]["variants"][vi][0] for fi, vi in ordered
    ]
    doc_text = " ".join(pieces)
    passages = chunk_document(doc_text)

    sentences = []
    owners = []  # aligned with ordered: (passage_id, sent_id)
    next_sid: dict[int, int] = {}
    cursor = 0
    for piece in pieces:
        start = doc_text.index(piece, cursor)
        end = start + len(piece)
        cursor = end
        if piece in PREAMBLE:
            continue
        pid = None
        for p in passages:
            if p.char_start <= start and end <= p.char_end:
                pid = p.passage_id
                break
        assert pid is not None, "sentence straddles every window"
        sid = next_sid.get(pid, 0)
        next_sid[pid] = sid + 1
        fi, vi = ordered[len(owners)]
        raw, tokens = facts[fi]["variants"][vi]
        sentences.append(
            ParsedSentence(
                doc_id=DOC_ID,
                passage_id=pid,
                sent_id=sid,
                tokens=tuple(tokens),
                raw_text=raw,
                char_start=start - passages[pid].char_start,
            )
        )
        owners.append((pid, sid))

    # first occurrence in document order defines the gold sentence/passage
    first_occurrence: dict[int, tuple[int, int]] = {}
    for (fi, _vi), owner in zip(ordered, owners):
        if fi not in first_occurrence:
            first_occurrence[fi] = owner

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    (OUT_DIR / "corpus.txt").write_text(doc_text + "\n", encoding="utf-8")
    write_parse_jsonl(OUT_DIR / "parses.jsonl", sentences)

    def pair(fact, query):
        pid, sid = first_occurrence[fact["index"]]
        return {
            "query": query,
            "doc_id": DOC_ID,
            "passage_id": pid,
            "sent_id": sid,
            "clause": 0,
        }

    with open(OUT_DIR / "train_pairs.jsonl", "w", encoding="utf-8") as fh:
        for fact in facts:
            for template in TRAIN_TEMPLATES:
                query = template.format(s=fact["subject"], v=fact["verb"])
                fh.write(json.dumps(pair(fact, query)) + "\n")
    with open(OUT_DIR / "heldout_pairs.jsonl", "w", encoding="utf-8") as fh:
        for fact in facts:
            query = HELDOUT_TEMPLATE.format(s=fact["subject"], v=fact["verb"])
            fh.write(json.dumps(pair(fact, query)) + "\n")
    with open(OUT_DIR / "test_queries.jsonl", "w", encoding="utf-8") as fh:
        for fact in facts:
            query = TEST_TEMPLATE.format(s=fact["subject"], v=fact["verb"])
            fh.write(json.dumps({
                "query": query,
                "reference": fact["object_span"],
                "doc_id": DOC_ID,
            }) + "\n")

    gold = {
        "doc_id": DOC_ID,
        "passage_count": len(passages),
        "facts": [
            {
                "index": fact["index"],
                "subject": fact["subject_span"],
                "relation": fact["relation_span"],
                "object": fact["object_span"],
                "object_token": fact["object_token"],
                "gold_passage": first_occurrence[fact["index"]][0],
                "gold_sent": first_occurrence[fact["index"]][1],
                "train_queries": [
                    t.format(s=fact["subject"], v=fact["verb"])
                    for t in TRAIN_TEMPLATES
                ],
                "heldout_query": HELDOUT_TEMPLATE.format(
                    s=fact["subject"], v=fact["verb"]
                ),
                "test_query": TEST_TEMPLATE.format(
                    s=fact["subject"], v=fact["verb"]
                ),
            }
            for fact in facts
        ],
    }
    (OUT_DIR / "gold.json").write_text(
        json.dumps(gold, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    print(
        f"wrote {len(sentences)} parsed sentences over {len(passages)} "
        f"passages to {OUT_DIR}"
    )


if __name__ == "__main__":
    main()
