"""Answer-quality metrics, timing, and the parameter-efficiency score.

BLEU-n uses clipped modified n-gram precision with a brevity penalty and the
geometric mean over orders 1..n. ROUGE-1/2 are n-gram-overlap F1; ROUGE-L is
longest-common-subsequence F1. Efficiency is 1 / (parameters_in_millions x
loss), so smaller models with lower loss score higher.
"""

from __future__ import annotations

import json
import math
import re
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import tensor as T
from .errors import DataFormatError, UsageError
from .model import Model
from .pipeline import CompiledDocument, answer_precompiled
from .training import lm_loss
from .vocab import BOS, EOS

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def metric_tokens(text: str) -> list[str]:
    """Lowercase words, punctuation and whitespace discarded."""
    return _TOKEN_RE.findall(text.lower())


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(candidate: str, reference: str, n: int) -> float:
    """Clipped precision geometric mean over orders 1..n, times the brevity
    penalty exp(1 - r/c) when the candidate is shorter than the reference."""
    if n < 1:
        raise UsageError("n-gram order must be at least 1")
    cand = metric_tokens(candidate)
    ref = metric_tokens(reference)
    if not cand or not ref:
        return 0.0
    log_sum = 0.0
    for order in range(1, n + 1):
        cgrams = _ngrams(cand, order)
        total = sum(cgrams.values())
        if total == 0:
            return 0.0
        rgrams = _ngrams(ref, order)
        clipped = sum(min(c, rgrams[g]) for g, c in cgrams.items())
        if clipped == 0:
            return 0.0
        log_sum += math.log(clipped / total)
    precision = math.exp(log_sum / n)
    c, r = len(cand), len(ref)
    bp = math.exp(1.0 - r / c) if c < r else 1.0
    return precision * bp


def _f1(overlap: float, cand_total: float, ref_total: float) -> float:
    if overlap == 0 or cand_total == 0 or ref_total == 0:
        return 0.0
    p = overlap / cand_total
    r = overlap / ref_total
    return 2.0 * p * r / (p + r)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, 1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge(candidate: str, reference: str, variant: str) -> float:
    """F1 for variant "1" or "2" (n-gram overlap) or "L" (LCS)."""
    cand = metric_tokens(candidate)
    ref = metric_tokens(reference)
    if not cand or not ref:
        return 0.0
    if variant in ("1", "2"):
        n = int(variant)
        cgrams = _ngrams(cand, n)
        rgrams = _ngrams(ref, n)
        overlap = sum(min(c, rgrams[g]) for g, c in cgrams.items())
        return _f1(overlap, sum(cgrams.values()), sum(rgrams.values()))
    if variant == "L":
        return _f1(_lcs_length(cand, ref), len(cand), len(ref))
    raise UsageError(f"unknown rouge variant {variant!r}, expected 1, 2, or L")


def efficiency(parameters_millions: float, loss: float) -> float:
    """1 / (parameters_millions x loss); higher is better."""
    if parameters_millions <= 0 or loss <= 0:
        raise UsageError("efficiency needs positive parameter count and loss")
    return 1.0 / (parameters_millions * loss)


# ---------------------------------------------------------------------------
# end-to-end evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalExample:
    query: str
    reference: str
    doc_id: str


def read_eval_jsonl(path: str | Path) -> list[EvalExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            for key in ("query", "reference", "doc_id"):
                if key not in obj:
                    raise DataFormatError(f"{path}:{lineno}: missing field {key!r}")
            out.append(EvalExample(obj["query"], obj["reference"], obj["doc_id"]))
    return out


@dataclass
class ExampleScores:
    query: str
    answer: str
    doc_id: str
    bleu1: float
    bleu2: float
    bleu4: float
    rouge1: float
    rouge2: float
    rougeL: float
    seconds: float


@dataclass
class EvalReport:
    examples: list[ExampleScores]
    means: dict[str, float]
    mean_seconds: float
    loss: float
    parameter_count: int
    efficiency_score: float
    metadata: dict = field(default_factory=dict)


METRIC_NAMES = ("bleu1", "bleu2", "bleu4", "rouge1", "rouge2", "rougeL")


def _reference_loss(model: Model, query: str, reference: str,
                    compiled: CompiledDocument) -> float:
    """Teacher-forced cross-entropy of the reference answer given the query
    and its assembled memory."""
    from .pipeline import _assemble_for_query

    ref_ids = model.vocab.encode(reference) + [EOS]
    with T.no_grad():
        mem, _ = _assemble_for_query(
            model, compiled.store, compiled.passage_matrix,
            compiled.passage_fact_ids, query,
        )
        m = T.tensor(mem.matrix.astype("float64")) if len(mem) else None
        z, _ = model.encode(model.vocab.encode(query), mem=m)
        logits = model.decoder_logits([BOS] + ref_ids[:-1], z)
        return lm_loss(logits, ref_ids).item()


def evaluate(
    model: Model,
    examples: Sequence[EvalExample],
    documents: Mapping[str, CompiledDocument],
    max_new_tokens: int = 24,
) -> EvalReport:
    """Answer each example over its compiled document, score, and time it."""
    if not examples:
        raise UsageError("evaluation needs at least one example")
    rows = []
    losses = []
    for ex in examples:
        if ex.doc_id not in documents:
            raise UsageError(f"no compiled document for {ex.doc_id!r}")
        compiled = documents[ex.doc_id]
        t0 = time.perf_counter()
        result = answer_precompiled(
            model, compiled, ex.query, max_new_tokens=max_new_tokens
        )
        seconds = time.perf_counter() - t0
        answer = result.record.answer_text
        rows.append(
            ExampleScores(
                query=ex.query,
                answer=answer,
                doc_id=ex.doc_id,
                bleu1=bleu_n(answer, ex.reference, 1),
                bleu2=bleu_n(answer, ex.reference, 2),
                bleu4=bleu_n(answer, ex.reference, 4),
                rouge1=rouge(answer, ex.reference, "1"),
                rouge2=rouge(answer, ex.reference, "2"),
                rougeL=rouge(answer, ex.reference, "L"),
                seconds=seconds,
            )
        )
        losses.append(_reference_loss(model, ex.query, ex.reference, compiled))
    means = {
        name: sum(getattr(r, name) for r in rows) / len(rows)
        for name in METRIC_NAMES
    }
    loss = sum(losses) / len(losses)
    count = model.params.count()
    return EvalReport(
        examples=rows,
        means=means,
        mean_seconds=sum(r.seconds for r in rows) / len(rows),
        loss=loss,
        parameter_count=count,
        efficiency_score=efficiency(count / 1e6, loss),
        metadata={"example_count": len(rows)},
    )


def report_to_json(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(asdict(report), indent=2) + "\n", encoding="utf-8"
    )


def format_report(report: EvalReport) -> str:
    lines = []
    lines.append(f"{'metric':<10} {'mean':>10}")
    for name in METRIC_NAMES:
        lines.append(f"{name:<10} {report.means[name]:>10.4f}")
    lines.append(f"{'seconds':<10} {report.mean_seconds:>10.4f}")
    lines.append(f"{'loss':<10} {report.loss:>10.4f}")
    lines.append(f"{'params':<10} {report.parameter_count:>10d}")
    lines.append(f"{'efficiency':<10} {report.efficiency_score:>10.3e}")
    return "\n".join(lines)
