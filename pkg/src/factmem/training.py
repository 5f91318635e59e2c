"""Staged training: language pretraining, memory alignment warmup, joint
fine-tuning.

Stage 1 teaches the encoder-decoder plain next-token prediction over packed
sentence windows (no memory attached). Stage 2 freezes everything except the
memory-attention projections, the fact projection heads, and a small
alignment head, and pulls the aligned query projection onto its gold memory
row by mean squared error. Stage 3 optimizes the weighted sum of that MSE, a
contrastive term on the read-attention scores with in-batch negatives, and a
triple-reconstruction cross-entropy, end to end.

All loops are deterministic given the config seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import tensor as T
from .errors import DataFormatError, NumericError, ShapeError, UsageError
from .extraction import (
    ParsedSentence,
    TreeNode,
    encode_span,
    fact_structures,
    project_fact,
)
from .model import Model, save_checkpoint
from .vocab import BOS, EOS, PAD, SEP


@dataclass
class TrainingConfig:
    stage: int
    lr: float
    max_steps: int
    warmup_steps: int = 0
    batch_size: int = 32
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    tau: float = 0.07
    negatives: int = 31
    w_mse: float = 1.0
    w_nce: float = 1.0
    w_recon: float = 0.5
    context_sentences: int = 4
    seed: int = 0
    checkpoint_interval: int = 0

    def __post_init__(self) -> None:
        if self.stage not in (1, 2, 3):
            raise UsageError(f"stage must be 1, 2, or 3, got {self.stage}")
        if self.lr <= 0 or self.tau <= 0:
            raise UsageError("learning rate and tau must be positive")
        if min(self.w_mse, self.w_nce, self.w_recon) < 0:
            raise UsageError("loss weights must be nonnegative")
        if self.batch_size < 1 or self.max_steps < 1:
            raise UsageError("batch size and step count must be positive")

    @classmethod
    def for_stage(cls, stage: int, max_steps: int, **overrides) -> "TrainingConfig":
        """Published per-stage defaults: stage 1 runs lr 4e-5 with a 3000-step
        linear warmup; stages 2 and 3 run lr 1e-4 with no warmup."""
        base = dict(
            stage=stage,
            lr=4e-5 if stage == 1 else 1e-4,
            warmup_steps=3000 if stage == 1 else 0,
            max_steps=max_steps,
        )
        base.update(overrides)
        return cls(**base)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def lm_loss(logits: T.Tensor, targets: Sequence[int]) -> T.Tensor:
    """Mean next-token cross-entropy (natural log); pad targets are skipped."""
    ids = list(targets)
    if logits.shape[0] != len(ids):
        raise ShapeError(
            f"{logits.shape[0]} logit rows for {len(ids)} targets"
        )
    keep = [i for i, t in enumerate(ids) if t != PAD]
    if not keep:
        raise UsageError("loss over an all-pad target")
    mask = np.zeros((len(ids), 1))
    mask[keep] = 1.0
    picked = T.pick(T.log_softmax(logits), ids)
    total = T.tsum(T.mul(picked, T.tensor(mask)))
    return T.scale(T.neg(total), 1.0 / len(keep))


def warmup_mse(q_proj: T.Tensor, m: T.Tensor) -> T.Tensor:
    """Squared L2 distance summed over dimensions, averaged over the batch."""
    if q_proj.shape != m.shape:
        raise ShapeError(f"shape mismatch {q_proj.shape} vs {m.shape}")
    diff = T.sub(q_proj, m)
    return T.scale(T.tsum(T.mul(diff, diff)), 1.0 / q_proj.shape[0])


def info_nce(
    q: T.Tensor, positive: T.Tensor, negatives: T.Tensor, tau: float
) -> T.Tensor:
    """Contrastive loss for one query (1 x d) against 1 positive and K
    negative rows, temperature tau."""
    if tau <= 0:
        raise UsageError("tau must be positive")
    pos_score = T.matmul(q, T.transpose(positive))  # 1 x 1
    neg_scores = T.matmul(q, T.transpose(negatives))  # 1 x K
    logits = T.scale(T.concat_cols([pos_score, neg_scores]), 1.0 / tau)
    return T.neg(T.tsum(T.pick(T.log_softmax(logits), [0])))


def info_nce_batch(q: T.Tensor, m: T.Tensor, tau: float) -> T.Tensor:
    """In-batch contrastive loss: row i's positive is m[i], its negatives
    are every other row. Batch mean."""
    if tau <= 0:
        raise UsageError("tau must be positive")
    if q.shape != m.shape:
        raise ShapeError(f"query/row shape mismatch {q.shape} vs {m.shape}")
    n = q.shape[0]
    if n < 2:
        raise UsageError("in-batch contrastive loss needs at least 2 pairs")
    logits = T.scale(T.matmul(q, T.transpose(m)), 1.0 / tau)
    picked = T.pick(T.log_softmax(logits), list(range(n)))
    return T.scale(T.neg(T.tsum(picked)), 1.0 / n)


def serialize_triple_ids(
    model: Model, subject: str, relation: str, obj: str
) -> list[int]:
    """Target token ids: subject <sep> relation <sep> object <eos>."""
    v = model.vocab
    return (
        v.encode(subject) + [SEP] + v.encode(relation) + [SEP] + v.encode(obj) + [EOS]
    )


def reconstruction_loss(
    model: Model, m_row: T.Tensor, target_ids: Sequence[int]
) -> T.Tensor:
    """Cross-entropy of decoding the serialized triple from a one-row memory
    (the encoder sees only the begin token)."""
    if not target_ids:
        raise UsageError("empty reconstruction target")
    z, _ = model.encode([BOS], mem=m_row)
    dec_in = [BOS] + list(target_ids[:-1])
    return lm_loss(model.decoder_logits(dec_in, z), target_ids)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


def clip_gradients(
    grads: dict[str, np.ndarray], max_norm: float
) -> tuple[dict[str, np.ndarray], float]:
    """Global-norm clipping; returns (possibly scaled grads, pre-clip norm)."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm > 0:
        factor = max_norm / total
        grads = {k: g * factor for k, g in grads.items()}
    return grads, total


class AdamW:
    """Decoupled weight decay: with zero gradients a parameter shrinks by
    exactly lr * decay per step."""

    def __init__(
        self,
        params: T.ParameterSet,
        lr: float,
        warmup_steps: int = 0,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
        trainable: set[str] | None = None,
    ):
        self.params = params
        self.base_lr = lr
        self.warmup_steps = warmup_steps
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.trainable = trainable
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def _updates(self, name: str) -> bool:
        p = self.params[name]
        if not p.trainable:
            return False
        return self.trainable is None or name in self.trainable

    def current_lr(self) -> float:
        """Linear ramp over warmup_steps, then constant. Step count starts
        at 1, so lr(s) = base * s / warmup for s < warmup, exactly."""
        if self.warmup_steps > 0 and self.t < self.warmup_steps:
            return self.base_lr * self.t / self.warmup_steps
        return self.base_lr

    def step(self, grads: dict[str, np.ndarray]) -> float:
        self.t += 1
        lr = self.current_lr()
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            if not self._updates(name):
                continue
            p = self.params[name]
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self.m[name], self.v[name] = m, v
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.tensor.data = p.data - lr * self.weight_decay * p.data - lr * update
        return lr


def stage2_trainable_names(params: T.ParameterSet) -> set[str]:
    """Memory-attention projections, fact projection heads, alignment head."""
    out = set()
    for p in params:
        if ".mem." in p.name or p.name.startswith(("mem.", "mem_align.", "extractor.proj.")):
            out.add(p.name)
    return out


# ---------------------------------------------------------------------------
# training data
# ---------------------------------------------------------------------------

def split_sentences(text: str) -> list[str]:
    out = []
    buf: list[str] = []
    for word in text.split():
        buf.append(word)
        if word.endswith((".", "!", "?")):
            out.append(" ".join(buf))
            buf = []
    if buf:
        out.append(" ".join(buf))
    return out


def stage1_samples(
    lines: Iterable[str], model: Model, window: int
) -> list[list[int]]:
    """Pack each document's sentences into fixed windows, tokenized."""
    samples = []
    for line in lines:
        sents = split_sentences(line.strip())
        for i in range(0, len(sents), window):
            text = " ".join(sents[i : i + window])
            ids = model.vocab.encode(text)
            if len(ids) >= 2:
                samples.append(ids)
    return samples


@dataclass(frozen=True, eq=False)
class FactExample:
    """One (query paraphrase, gold fact) training pair.

    trees are the dependency span trees of the gold fact; they depend only
    on the parse, so the fact's memory row can be recomputed under current
    weights at every step.
    """

    query: str
    key: tuple[str, int, int, int]  # doc_id, passage_id, sent_id, clause
    subject: str
    relation: str
    object: str
    trees: tuple[TreeNode, TreeNode, TreeNode]


def read_pairs_jsonl(path: str | Path) -> list[dict]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            for key in ("query", "doc_id", "passage_id", "sent_id", "clause"):
                if key not in obj:
                    raise DataFormatError(f"{path}:{lineno}: missing field {key!r}")
            pairs.append(obj)
    return pairs


def build_fact_examples(
    pairs: Iterable[dict],
    sentences: Iterable[ParsedSentence],
    model: Model,
) -> list[FactExample]:
    encode_token = model.extractor_weights().encode_token
    by_key: dict[tuple, ParsedSentence] = {
        (s.doc_id, s.passage_id, s.sent_id): s for s in sentences
    }
    structure_cache: dict[tuple, list] = {}
    out = []
    for pair in pairs:
        skey = (pair["doc_id"], int(pair["passage_id"]), int(pair["sent_id"]))
        sent = by_key.get(skey)
        if sent is None:
            raise DataFormatError(f"training pair references unknown sentence {skey}")
        if skey not in structure_cache:
            structure_cache[skey] = fact_structures(sent, encode_token)
        structures = structure_cache[skey]
        clause = int(pair["clause"])
        if not 0 <= clause < len(structures):
            raise DataFormatError(
                f"sentence {skey} has {len(structures)} clauses, pair wants {clause}"
            )
        sel, t_s, t_r, t_o = structures[clause]
        out.append(
            FactExample(
                query=pair["query"],
                key=(*skey, clause),
                subject=sent.span_text(*sel.subject),
                relation=sent.span_text(*sel.relation),
                object=sent.span_text(*sel.object),
                trees=(t_s, t_r, t_o),
            )
        )
    return out


def _sample_fact_batch(
    examples: list[FactExample], batch_size: int, rng: np.random.Generator
) -> list[FactExample]:
    """Distinct facts per batch so in-batch negatives are true negatives;
    one paraphrase sampled per chosen fact."""
    groups: dict[tuple, list[FactExample]] = {}
    for ex in examples:
        groups.setdefault(ex.key, []).append(ex)
    keys = sorted(groups)
    take = min(batch_size, len(keys))
    chosen = rng.choice(len(keys), size=take, replace=False)
    batch = []
    for i in sorted(int(c) for c in chosen):
        group = groups[keys[i]]
        batch.append(group[int(rng.integers(len(group)))])
    return batch


# ---------------------------------------------------------------------------
# loss assembly per stage
# ---------------------------------------------------------------------------


def fact_row_tensor(model: Model, trees: tuple[TreeNode, TreeNode, TreeNode]) -> T.Tensor:
    """Recompute a fact's unit memory row under current weights, 1 x d."""
    xw = model.extractor_weights()
    h_s = encode_span(trees[0], xw.tree, xw.embedding)
    h_r = encode_span(trees[1], xw.tree, xw.embedding)
    h_o = encode_span(trees[2], xw.tree, xw.embedding)
    _, _, _, m = project_fact(h_s, h_r, h_o, xw.projection)
    return T.normalize_rows(m)


def aligned_query_projection(model: Model, q: T.Tensor, block: int) -> T.Tensor:
    """q -> memory-attention query space -> back to memory width."""
    prefix = model._mem_prefix(block)
    q_tilde = T.matmul(q, model._p(f"{prefix}.w_q"))
    return T.add(
        T.matmul(q_tilde, model._p("mem_align.w")), model._p("mem_align.b")
    )


def alignment_mse(model: Model, q: T.Tensor, m: T.Tensor) -> T.Tensor:
    """warmup_mse averaged over every encoder block's query projection."""
    blocks = (
        1 if model.config.share_memory_weights else model.config.encoder_layers
    )
    total = warmup_mse(aligned_query_projection(model, q, 0), m)
    for b in range(1, blocks):
        total = T.add(total, warmup_mse(aligned_query_projection(model, q, b), m))
    return T.scale(total, 1.0 / blocks)


def retrieval_query(model: Model, q: T.Tensor, block: int) -> T.Tensor:
    """Query mapped through a block's read-attention projections, memory
    width. Its dot with any memory row equals that row's attention logit,
    so a contrastive loss on these scores trains the read weights directly.
    """
    prefix = model._mem_prefix(block)
    scores = T.matmul(
        T.matmul(q, model._p(f"{prefix}.w_q")),
        T.transpose(model._p(f"{prefix}.w_k")),
    )
    return T.scale(scores, 1.0 / math.sqrt(model.config.mem_d_k))


def _block_count(model: Model) -> int:
    return 1 if model.config.share_memory_weights else model.config.encoder_layers


def retrieval_nce(
    model: Model, q: T.Tensor, positive: T.Tensor,
    negatives: T.Tensor | None, tau: float,
) -> T.Tensor:
    """info_nce averaged over the query representations retrieval uses: the
    raw unit query (store scans) and each block's read-attention scores.

    tau applies to the raw view, whose scores are bounded cosines. The
    attention-score views keep temperature 1 because the read softmax is
    applied to those logits untempered; training them through tau would
    leave margins far too small to concentrate the read weights.

    With negatives=None the in-batch form is used (positive and q must then
    be full batches of matching rows)."""
    views = [(q, tau)] + [
        (retrieval_query(model, q, b), 1.0) for b in range(_block_count(model))
    ]
    total = None
    for view, view_tau in views:
        if negatives is None:
            piece = info_nce_batch(view, positive, view_tau)
        else:
            piece = info_nce(view, positive, negatives, view_tau)
        total = piece if total is None else T.add(total, piece)
    return T.scale(total, 1.0 / len(views))


def combined_loss(
    model: Model,
    query_ids: Sequence[int],
    m_pos: T.Tensor,
    negatives: T.Tensor | None,
    target_ids: Sequence[int],
    cfg: TrainingConfig,
) -> tuple[T.Tensor, dict[str, float]]:
    """Single-example weighted stage-3 loss; negatives may be fixed rows."""
    q = model.query_vector(query_ids)
    mse = alignment_mse(model, q, m_pos)
    if negatives is not None:
        nce = retrieval_nce(model, q, m_pos, negatives, cfg.tau)
    else:
        nce = T.tensor(np.asarray(0.0))
    recon = reconstruction_loss(model, m_pos, target_ids)
    total = T.add(
        T.add(T.scale(mse, cfg.w_mse), T.scale(nce, cfg.w_nce)),
        T.scale(recon, cfg.w_recon),
    )
    parts = {"mse": mse.item(), "nce": nce.item(), "recon": recon.item()}
    return total, parts


def _stage2_batch_loss(
    model: Model, batch: list[FactExample], cfg: TrainingConfig
) -> tuple[T.Tensor, dict[str, float]]:
    q = T.concat_rows([model.query_vector(model.vocab.encode(ex.query)) for ex in batch])
    m = T.concat_rows([fact_row_tensor(model, ex.trees) for ex in batch])
    mse = alignment_mse(model, q, m)
    return mse, {"mse": mse.item()}


def _stage3_batch_loss(
    model: Model, batch: list[FactExample], cfg: TrainingConfig
) -> tuple[T.Tensor, dict[str, float]]:
    q = T.concat_rows([model.query_vector(model.vocab.encode(ex.query)) for ex in batch])
    m_rows = [fact_row_tensor(model, ex.trees) for ex in batch]
    m = T.concat_rows(m_rows)
    mse = alignment_mse(model, q, m)
    nce = retrieval_nce(model, q, m, None, cfg.tau)
    recon_total = None
    for ex, m_row in zip(batch, m_rows):
        ids = serialize_triple_ids(model, ex.subject, ex.relation, ex.object)
        r = reconstruction_loss(model, m_row, ids)
        recon_total = r if recon_total is None else T.add(recon_total, r)
    recon = T.scale(recon_total, 1.0 / len(batch))
    total = T.add(
        T.add(T.scale(mse, cfg.w_mse), T.scale(nce, cfg.w_nce)),
        T.scale(recon, cfg.w_recon),
    )
    return total, {"mse": mse.item(), "nce": nce.item(), "recon": recon.item()}


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------


@dataclass
class LossPoint:
    step: int
    stage: int
    total: float
    parts: dict[str, float] = field(default_factory=dict)
    lr: float = 0.0
    grad_norm: float = 0.0


def write_loss_csv(path: str | Path, curve: Sequence[LossPoint]) -> None:
    keys = sorted({k for pt in curve for k in pt.parts})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "stage", "total", "lr", "grad_norm", *keys])
        for pt in curve:
            writer.writerow(
                [pt.step, pt.stage, f"{pt.total:.10g}", f"{pt.lr:.10g}",
                 f"{pt.grad_norm:.10g}"]
                + [f"{pt.parts.get(k, 0.0):.10g}" for k in keys]
            )


def _run_loop(
    model: Model,
    cfg: TrainingConfig,
    make_batch: Callable[[np.random.Generator], object],
    batch_loss: Callable[[object], tuple[T.Tensor, dict[str, float]]],
    trainable: set[str] | None,
    ckpt_dir: str | Path | None,
) -> list[LossPoint]:
    rng = np.random.default_rng(cfg.seed)
    opt = AdamW(
        model.params,
        lr=cfg.lr,
        warmup_steps=cfg.warmup_steps,
        weight_decay=cfg.weight_decay,
        trainable=trainable,
    )
    curve: list[LossPoint] = []
    for step in range(1, cfg.max_steps + 1):
        model.params.zero_grad()
        batch = make_batch(rng)
        try:
            loss, parts = batch_loss(batch)
            grads = T.backward(loss, model.params)
        except NumericError as exc:
            raise NumericError(
                f"stage {cfg.stage} step {step}: non-finite value during "
                f"training ({exc})"
            ) from exc
        value = loss.item()
        if not math.isfinite(value):
            raise NumericError(f"stage {cfg.stage} step {step}: loss is {value}")
        # clip over the parameters the optimizer may move, not frozen ones
        grads = {
            k: g for k, g in grads.items()
            if model.params[k].trainable and (trainable is None or k in trainable)
        }
        grads, norm = clip_gradients(grads, cfg.clip_norm)
        lr = opt.step(grads)
        curve.append(
            LossPoint(step=step, stage=cfg.stage, total=value, parts=parts,
                      lr=lr, grad_norm=norm)
        )
        model.step += 1
        if ckpt_dir and cfg.checkpoint_interval and step % cfg.checkpoint_interval == 0:
            save_checkpoint(model, ckpt_dir)
    model.stage = max(model.stage, cfg.stage)
    if ckpt_dir:
        save_checkpoint(model, ckpt_dir)
    return curve


def train_stage1(
    model: Model,
    corpus_lines: Sequence[str],
    cfg: TrainingConfig,
    ckpt_dir: str | Path | None = None,
) -> list[LossPoint]:
    samples = stage1_samples(corpus_lines, model, cfg.context_sentences)
    if not samples:
        raise UsageError("stage 1 corpus produced no training samples")

    def make_batch(rng: np.random.Generator) -> list[list[int]]:
        take = min(cfg.batch_size, len(samples))
        idx = rng.choice(len(samples), size=take, replace=False)
        return [samples[int(i)] for i in sorted(int(j) for j in idx)]

    def batch_loss(batch: list[list[int]]):
        total = None
        for ids in batch:
            z, _ = model.encode(ids)
            targets = ids + [EOS]
            logits = model.decoder_logits([BOS] + ids, z)
            piece = lm_loss(logits, targets)
            total = piece if total is None else T.add(total, piece)
        loss = T.scale(total, 1.0 / len(batch))
        return loss, {"lm": loss.item()}

    return _run_loop(model, cfg, make_batch, batch_loss, None, ckpt_dir)


def train_stage2(
    model: Model,
    examples: list[FactExample],
    cfg: TrainingConfig,
    ckpt_dir: str | Path | None = None,
) -> list[LossPoint]:
    if model.stage < 1:
        raise UsageError("stage 2 requires a stage-1 checkpoint")
    if not examples:
        raise UsageError("stage 2 needs training pairs")
    trainable = stage2_trainable_names(model.params)

    def make_batch(rng: np.random.Generator) -> list[FactExample]:
        return _sample_fact_batch(examples, cfg.batch_size, rng)

    return _run_loop(
        model, cfg, make_batch,
        lambda batch: _stage2_batch_loss(model, batch, cfg),
        trainable, ckpt_dir,
    )


def train_stage3(
    model: Model,
    examples: list[FactExample],
    cfg: TrainingConfig,
    ckpt_dir: str | Path | None = None,
) -> list[LossPoint]:
    if model.stage < 2:
        raise UsageError("stage 3 requires a stage-2 checkpoint")
    if not examples:
        raise UsageError("stage 3 needs training pairs")

    def make_batch(rng: np.random.Generator) -> list[FactExample]:
        batch = _sample_fact_batch(examples, cfg.batch_size, rng)
        if len(batch) < 2:
            raise UsageError("stage 3 needs at least 2 distinct facts")
        return batch

    return _run_loop(
        model, cfg, make_batch,
        lambda batch: _stage3_batch_loss(model, batch, cfg),
        None, ckpt_dir,
    )


def train_stage(
    stage: int,
    model: Model,
    data: object,
    cfg: TrainingConfig,
    ckpt_dir: str | Path | None = None,
) -> list[LossPoint]:
    if stage != cfg.stage:
        raise UsageError(f"config is for stage {cfg.stage}, not {stage}")
    if stage == 1:
        return train_stage1(model, data, cfg, ckpt_dir)
    if stage == 2:
        return train_stage2(model, data, cfg, ckpt_dir)
    return train_stage3(model, data, cfg, ckpt_dir)
