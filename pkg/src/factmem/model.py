"""Encoder-decoder transformer that reads an external fact memory.

Every encoder block mixes its self-attention output with an attention read
over the memory matrix through a learned scalar gate, then the decoder
cross-attends to the encoder states and emits vocabulary logits through the
(by default tied) embedding matrix. With no memory attached the gate path is
bypassed entirely and the model behaves as a plain transformer.

Checkpoints are two files: model.json (config, vocabulary, parameter layout)
and weights.bin (concatenated row-major little-endian float64 tensors).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import DataFormatError, UsageError
from .extraction import ExtractorWeights, FactProjection, TreeLstmWeights
from .memory import MemoryMatrix, memory_read
from .vocab import BOS, EOS, Vocabulary

CHECKPOINT_VERSION = 1
WEIGHT_DTYPE = "<f8"


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 384
    d_ff: int = 1536
    encoder_layers: int = 6
    decoder_layers: int = 6
    heads: int = 8
    d_head: int = 48
    memory_dim: int = 384
    mem_d_k: int = 48
    fact_proj_dim: int = 128
    max_positions: int = 512
    gate_init: float = 2.0
    tie_embeddings: bool = True
    learned_positions: bool = False
    share_memory_weights: bool = False
    include_extractor: bool = True

    def __post_init__(self) -> None:
        if self.heads * self.d_head != self.d_model:
            raise UsageError(
                f"heads x d_head must equal d_model: "
                f"{self.heads} x {self.d_head} != {self.d_model}"
            )
        if self.memory_dim != self.d_model:
            raise UsageError(
                "memory rows fuse into token states, so memory_dim must "
                f"equal d_model ({self.memory_dim} != {self.d_model})"
            )
        if self.include_extractor and 3 * self.fact_proj_dim != self.memory_dim:
            raise UsageError(
                "fact rows concatenate three projections: "
                f"3 x {self.fact_proj_dim} != {self.memory_dim}"
            )
        if self.vocab_size < 6:
            raise UsageError("vocab must cover the five special tokens")
        for name in ("d_model", "d_ff", "encoder_layers", "decoder_layers",
                     "heads", "d_head", "mem_d_k", "max_positions"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive")

    @classmethod
    def toy(cls, vocab_size: int = 11) -> "ModelConfig":
        """Smallest checkable instance; extraction is switched off."""
        return cls(
            vocab_size=vocab_size,
            d_model=8,
            d_ff=32,
            encoder_layers=1,
            decoder_layers=1,
            heads=2,
            d_head=4,
            memory_dim=8,
            mem_d_k=4,
            fact_proj_dim=0,
            max_positions=32,
            include_extractor=False,
        )

    @classmethod
    def desk(cls, vocab_size: int) -> "ModelConfig":
        """Trains in minutes on one CPU core."""
        return cls(
            vocab_size=vocab_size,
            d_model=48,
            d_ff=192,
            encoder_layers=2,
            decoder_layers=2,
            heads=4,
            d_head=12,
            memory_dim=48,
            mem_d_k=12,
            fact_proj_dim=16,
            max_positions=128,
        )

    @classmethod
    def published(cls) -> "ModelConfig":
        """The published full-scale dimensions."""
        return cls(vocab_size=50257, max_positions=1024)


def sinusoidal_positions(n: int, d: int) -> np.ndarray:
    """PE[i, 2k] = sin(i / 10000^(2k/d)); PE[i, 2k+1] = cos of the same."""
    pe = np.zeros((n, d))
    pos = np.arange(n)[:, None].astype(np.float64)
    k2 = np.arange(0, d, 2).astype(np.float64)
    angles = pos / np.power(10000.0, k2 / d)[None, :]
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : pe[:, 1::2].shape[1]])
    return pe


# ---------------------------------------------------------------------------
# parameter construction
# ---------------------------------------------------------------------------


def _register_attention(ps: T.ParameterSet, prefix: str, d: int, rng) -> None:
    for name in ("w_q", "w_k", "w_v", "w_o"):
        ps.register(f"{prefix}.{name}", rng.normal(0.0, 0.02, (d, d)))


def _register_ffn(ps: T.ParameterSet, prefix: str, d: int, d_ff: int, rng) -> None:
    ps.register(f"{prefix}.w1", rng.normal(0.0, 0.02, (d, d_ff)))
    ps.register(f"{prefix}.b1", np.zeros(d_ff))
    ps.register(f"{prefix}.w2", rng.normal(0.0, 0.02, (d_ff, d)))
    ps.register(f"{prefix}.b2", np.zeros(d))


def _register_ln(ps: T.ParameterSet, prefix: str, d: int) -> None:
    ps.register(f"{prefix}.g", np.ones(d))
    ps.register(f"{prefix}.b", np.zeros(d))


def _register_memory_weights(ps: T.ParameterSet, prefix: str, cfg: ModelConfig, rng) -> None:
    ps.register(f"{prefix}.w_q", rng.normal(0.0, 0.02, (cfg.memory_dim, cfg.mem_d_k)))
    # key projection starts equal to the query projection so that queries
    # trained toward their rows also score highest in the read attention
    ps.register(f"{prefix}.w_k", ps[f"{prefix}.w_q"].data.copy())
    ps.register(f"{prefix}.w_v", rng.normal(0.0, 0.02, (cfg.memory_dim, cfg.d_model)))


def build_parameters(cfg: ModelConfig, seed: int = 0) -> T.ParameterSet:
    rng = np.random.default_rng(seed)
    ps = T.ParameterSet()
    ps.register("embed.tokens", rng.normal(0.0, 0.02, (cfg.vocab_size, cfg.d_model)))
    if cfg.learned_positions:
        ps.register(
            "embed.positions", rng.normal(0.0, 0.02, (cfg.max_positions, cfg.d_model))
        )
    if cfg.share_memory_weights:
        _register_memory_weights(ps, "mem", cfg, rng)
    for b in range(cfg.encoder_layers):
        _register_attention(ps, f"enc{b}.attn", cfg.d_model, rng)
        if not cfg.share_memory_weights:
            _register_memory_weights(ps, f"enc{b}.mem", cfg, rng)
        ps.register(f"enc{b}.gate", np.asarray(cfg.gate_init))
        _register_ffn(ps, f"enc{b}.ffn", cfg.d_model, cfg.d_ff, rng)
        _register_ln(ps, f"enc{b}.ln1", cfg.d_model)
        _register_ln(ps, f"enc{b}.ln2", cfg.d_model)
    for b in range(cfg.decoder_layers):
        _register_attention(ps, f"dec{b}.self", cfg.d_model, rng)
        _register_attention(ps, f"dec{b}.cross", cfg.d_model, rng)
        _register_ffn(ps, f"dec{b}.ffn", cfg.d_model, cfg.d_ff, rng)
        _register_ln(ps, f"dec{b}.ln1", cfg.d_model)
        _register_ln(ps, f"dec{b}.ln2", cfg.d_model)
        _register_ln(ps, f"dec{b}.ln3", cfg.d_model)
    if not cfg.tie_embeddings:
        ps.register("out.w", rng.normal(0.0, 0.02, (cfg.d_model, cfg.vocab_size)))
    ps.register("mem_align.w", rng.normal(0.0, 0.02, (cfg.mem_d_k, cfg.memory_dim)))
    ps.register("mem_align.b", np.zeros(cfg.memory_dim))
    if cfg.include_extractor:
        TreeLstmWeights.create(ps, "extractor.tree", cfg.d_model, rng)
        FactProjection.create(
            ps, "extractor.proj", cfg.d_model, cfg.fact_proj_dim, rng
        )
    return ps


def count_parameters(cfg: ModelConfig) -> tuple[int, dict[str, int]]:
    """Closed-form parameter count per component (no tensors built)."""
    d, dff = cfg.d_model, cfg.d_ff
    breakdown: dict[str, int] = {}
    breakdown["embeddings"] = cfg.vocab_size * d + (
        cfg.max_positions * d if cfg.learned_positions else 0
    )
    mem_set = 2 * cfg.memory_dim * cfg.mem_d_k + cfg.memory_dim * d
    ffn = 2 * d * dff + dff + d
    ln = 2 * d
    enc_block = 4 * d * d + ffn + 2 * ln + 1
    if not cfg.share_memory_weights:
        enc_block += mem_set
    breakdown["encoder"] = cfg.encoder_layers * enc_block + (
        mem_set if cfg.share_memory_weights else 0
    )
    dec_block = 8 * d * d + ffn + 3 * ln
    breakdown["decoder"] = cfg.decoder_layers * dec_block
    breakdown["output_head"] = 0 if cfg.tie_embeddings else d * cfg.vocab_size
    breakdown["memory_alignment"] = cfg.mem_d_k * cfg.memory_dim + cfg.memory_dim
    if cfg.include_extractor:
        tree = 4 * (2 * d * d + d)
        proj = 3 * (d * cfg.fact_proj_dim + cfg.fact_proj_dim)
        breakdown["extractor"] = tree + proj
    else:
        breakdown["extractor"] = 0
    return sum(breakdown.values()), breakdown


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


def multi_head_attention(
    x_q: T.Tensor,
    x_kv: T.Tensor,
    w_q: T.Tensor,
    w_k: T.Tensor,
    w_v: T.Tensor,
    w_o: T.Tensor,
    heads: int,
    d_head: int,
    causal: bool = False,
) -> T.Tensor:
    n_q, n_k = x_q.shape[0], x_kv.shape[0]
    q_all = T.matmul(x_q, w_q)
    k_all = T.matmul(x_kv, w_k)
    v_all = T.matmul(x_kv, w_v)
    mask = None
    if causal:
        mask = np.tril(np.ones((n_q, n_k), dtype=bool))
    outs = []
    scale = 1.0 / np.sqrt(d_head)
    for h in range(heads):
        lo, hi = h * d_head, (h + 1) * d_head
        qh = T.slice_cols(q_all, lo, hi)
        kh = T.slice_cols(k_all, lo, hi)
        vh = T.slice_cols(v_all, lo, hi)
        logits = T.scale(T.matmul(qh, T.transpose(kh)), scale)
        attn = T.softmax(logits, mask=mask)
        outs.append(T.matmul(attn, vh))
    return T.matmul(T.concat_cols(outs), w_o)


@dataclass
class AnswerProvenance:
    """One consulted memory row: texts, read weight, retrieval score, source."""

    subject: str
    relation: str
    object: str
    alpha: float
    retrieval_score: float
    doc_id: str
    passage_id: int
    sent_id: int
    char_start: int
    char_end: int


@dataclass
class AnswerRecord:
    query_text: str
    answer_text: str
    answer_ids: list[int]
    provenance: list[AnswerProvenance] = field(default_factory=list)
    unsupported: bool = False


class Model:
    """Parameters plus the forward/generate API. Mutation only via training."""

    def __init__(
        self,
        config: ModelConfig,
        vocabulary: Vocabulary,
        params: T.ParameterSet | None = None,
        seed: int = 0,
    ):
        if len(vocabulary) != config.vocab_size:
            raise UsageError(
                f"vocabulary size {len(vocabulary)} != config {config.vocab_size}"
            )
        self.config = config
        self.vocab = vocabulary
        self.params = params if params is not None else build_parameters(config, seed)
        self.stage = 0
        self.step = 0

    # -- building blocks ---------------------------------------------------

    def _p(self, name: str) -> T.Tensor:
        return self.params[name].tensor

    def _mem_prefix(self, block: int) -> str:
        return "mem" if self.config.share_memory_weights else f"enc{block}.mem"

    def embed(self, ids: Sequence[int]) -> T.Tensor:
        cfg = self.config
        n = len(ids)
        if n == 0:
            raise UsageError("cannot embed an empty token sequence")
        if n > cfg.max_positions:
            raise UsageError(f"sequence length {n} exceeds {cfg.max_positions}")
        for i in ids:
            if not 0 <= i < cfg.vocab_size:
                raise UsageError(f"token id {i} outside vocabulary")
        x = T.gather_rows(self._p("embed.tokens"), ids)
        if cfg.learned_positions:
            pos = T.gather_rows(self._p("embed.positions"), list(range(n)))
            return T.add(x, pos)
        return T.add(x, T.tensor(sinusoidal_positions(n, cfg.d_model)))

    def query_vector(self, ids: Sequence[int]) -> T.Tensor:
        """Unit-normalized mean token embedding, 1 x d, differentiable."""
        rows = T.gather_rows(self._p("embed.tokens"), ids)
        pool = T.tensor(np.full((1, len(ids)), 1.0 / len(ids)))
        return T.normalize_rows(T.matmul(pool, rows))

    def query_numpy(self, text: str) -> np.ndarray:
        """Same construction as query_vector, plain numpy, for retrieval."""
        ids = self.vocab.encode(text)
        if not ids:
            raise UsageError("query text tokenizes to nothing")
        with T.no_grad():
            return self.query_vector(ids).data[0].copy()

    def _ffn(self, x: T.Tensor, prefix: str) -> T.Tensor:
        h = T.gelu(T.add(T.matmul(x, self._p(f"{prefix}.w1")), self._p(f"{prefix}.b1")))
        return T.add(T.matmul(h, self._p(f"{prefix}.w2")), self._p(f"{prefix}.b2"))

    def _ln(self, x: T.Tensor, prefix: str) -> T.Tensor:
        return T.layernorm(x, self._p(f"{prefix}.g"), self._p(f"{prefix}.b"))

    # -- encoder -----------------------------------------------------------

    def encode(
        self,
        ids: Sequence[int],
        mem: T.Tensor | None = None,
        q: T.Tensor | None = None,
    ) -> tuple[T.Tensor, T.Tensor | None]:
        """Returns (Z, final-block read weights or None for empty memory)."""
        cfg = self.config
        x = self.embed(ids)
        has_memory = mem is not None and mem.shape[0] > 0
        if has_memory and q is None:
            q = self.query_vector(ids)
        last_alpha: T.Tensor | None = None
        n = x.shape[0]
        for b in range(cfg.encoder_layers):
            x_self = multi_head_attention(
                x, x,
                self._p(f"enc{b}.attn.w_q"), self._p(f"enc{b}.attn.w_k"),
                self._p(f"enc{b}.attn.w_v"), self._p(f"enc{b}.attn.w_o"),
                cfg.heads, cfg.d_head,
            )
            if has_memory:
                mp = self._mem_prefix(b)
                c_mem, alpha = memory_read(
                    mem, q,
                    self._p(f"{mp}.w_q"), self._p(f"{mp}.w_k"), self._p(f"{mp}.w_v"),
                )
                last_alpha = alpha
                g = T.sigmoid(self._p(f"enc{b}.gate"))
                one_minus_g = T.add(T.neg(g), 1.0)
                x_fused = T.add(
                    T.mul(x_self, g),
                    T.mul(T.broadcast_row(c_mem, n), one_minus_g),
                )
            else:
                # empty memory: gate bypassed, plain transformer block
                x_fused = x_self
            x_mid = self._ln(T.add(x, x_fused), f"enc{b}.ln1")
            x = self._ln(T.add(x_mid, self._ffn(x_mid, f"enc{b}.ffn")), f"enc{b}.ln2")
        return x, last_alpha

    # -- decoder -----------------------------------------------------------

    def decoder_logits(self, target_ids: Sequence[int], z: T.Tensor) -> T.Tensor:
        """Logits (U x vocab) for each position of the shifted target."""
        cfg = self.config
        y = self.embed(target_ids)
        for b in range(cfg.decoder_layers):
            y_self = multi_head_attention(
                y, y,
                self._p(f"dec{b}.self.w_q"), self._p(f"dec{b}.self.w_k"),
                self._p(f"dec{b}.self.w_v"), self._p(f"dec{b}.self.w_o"),
                cfg.heads, cfg.d_head, causal=True,
            )
            y = self._ln(T.add(y, y_self), f"dec{b}.ln1")
            y_cross = multi_head_attention(
                y, z,
                self._p(f"dec{b}.cross.w_q"), self._p(f"dec{b}.cross.w_k"),
                self._p(f"dec{b}.cross.w_v"), self._p(f"dec{b}.cross.w_o"),
                cfg.heads, cfg.d_head,
            )
            y = self._ln(T.add(y, y_cross), f"dec{b}.ln2")
            y = self._ln(T.add(y, self._ffn(y, f"dec{b}.ffn")), f"dec{b}.ln3")
        if cfg.tie_embeddings:
            return T.matmul(y, T.transpose(self._p("embed.tokens")))
        return T.matmul(y, self._p("out.w"))

    # -- generation --------------------------------------------------------

    def generate(
        self,
        query_text: str,
        mem: MemoryMatrix | None = None,
        max_new_tokens: int = 24,
        mode: str = "greedy",
        temperature: float = 1.0,
        seed: int = 0,
    ) -> AnswerRecord:
        if mode not in ("greedy", "sample"):
            raise UsageError(f"unknown decode mode {mode!r}")
        query_ids = self.vocab.encode(query_text)
        if not query_ids:
            raise UsageError("empty query")
        empty = mem is None or len(mem) == 0
        rng = np.random.default_rng(seed)
        with T.no_grad():
            mem_t = (
                None if empty else T.tensor(mem.matrix.astype(np.float64))
            )
            z, alpha = self.encode(query_ids, mem_t)
            out_ids: list[int] = []
            ys = [BOS]
            for _ in range(max_new_tokens):
                logits = self.decoder_logits(ys, z)
                last = logits.data[-1]
                if mode == "greedy":
                    nxt = int(np.argmax(last))
                else:
                    if temperature <= 0:
                        raise UsageError("temperature must be positive")
                    scaled = (last - last.max()) / temperature
                    probs = np.exp(scaled)
                    probs /= probs.sum()
                    nxt = int(rng.choice(len(probs), p=probs))
                if nxt == EOS:
                    break
                out_ids.append(nxt)
                ys.append(nxt)
        provenance: list[AnswerProvenance] = []
        if not empty and alpha is not None:
            weights = alpha.data[0]
            order = np.argsort(-weights, kind="stable")
            for i in order:
                e = mem.entries[i]
                provenance.append(
                    AnswerProvenance(
                        subject=e.fact.subject_text,
                        relation=e.fact.relation_text,
                        object=e.fact.object_text,
                        alpha=float(weights[i]),
                        retrieval_score=e.score,
                        doc_id=e.fact.provenance.doc_id,
                        passage_id=e.fact.provenance.passage_id,
                        sent_id=e.fact.provenance.sent_id,
                        char_start=e.fact.provenance.char_start,
                        char_end=e.fact.provenance.char_end,
                    )
                )
        return AnswerRecord(
            query_text=query_text,
            answer_text=self.vocab.decode(out_ids),
            answer_ids=out_ids,
            provenance=provenance,
            unsupported=empty,
        )

    # -- extraction bridge -------------------------------------------------

    def extractor_weights(self) -> ExtractorWeights:
        cfg = self.config
        if not cfg.include_extractor:
            raise UsageError("this config was built without the extractor")
        return ExtractorWeights(
            tree=TreeLstmWeights.from_params(self.params, "extractor.tree", cfg.d_model),
            projection=FactProjection.from_params(
                self.params, "extractor.proj", cfg.d_model, cfg.fact_proj_dim
            ),
            embedding=self._p("embed.tokens"),
            encode_token=lambda text: self.vocab.id_of(text.lower()),
        )


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: Model, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    blobs = []
    for p in model.params:
        arr = np.ascontiguousarray(p.data, dtype=WEIGHT_DTYPE)
        blob = arr.tobytes()
        entries.append(
            {
                "name": p.name,
                "shape": list(p.data.shape),
                "offset": offset,
                "numel": int(arr.size),
                "trainable": p.trainable,
            }
        )
        offset += len(blob)
        blobs.append(blob)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "dtype": WEIGHT_DTYPE,
        "config": asdict(model.config),
        "vocabulary": list(model.vocab.tokens),
        "stage": model.stage,
        "step": model.step,
        "parameters": entries,
    }
    (d / "model.json").write_text(
        json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    (d / "weights.bin").write_bytes(b"".join(blobs))


def load_checkpoint(directory: str | Path) -> Model:
    d = Path(directory)
    try:
        manifest = json.loads((d / "model.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataFormatError(f"no checkpoint at {d}: {exc}") from exc
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise DataFormatError(
            f"unsupported checkpoint version {manifest.get('format_version')}"
        )
    if manifest.get("dtype") != WEIGHT_DTYPE:
        raise DataFormatError(f"unsupported weight dtype {manifest.get('dtype')}")
    cfg = ModelConfig(**manifest["config"])
    vocabulary = Vocabulary(tuple(manifest["vocabulary"]))
    model = Model(cfg, vocabulary)
    model.stage = int(manifest["stage"])
    model.step = int(manifest["step"])
    expected = {p.name: p.data.shape for p in model.params}
    listed = {e["name"]: tuple(e["shape"]) for e in manifest["parameters"]}
    if set(expected) != set(listed):
        missing = set(expected) ^ set(listed)
        raise DataFormatError(f"checkpoint parameter names do not match config: {sorted(missing)[:5]}")
    raw = (d / "weights.bin").read_bytes()
    for e in manifest["parameters"]:
        shape = tuple(e["shape"])
        if expected[e["name"]] != shape:
            raise DataFormatError(
                f"parameter {e['name']} has shape {shape}, config implies {expected[e['name']]}"
            )
        start = e["offset"]
        count = e["numel"]
        arr = np.frombuffer(raw, dtype=WEIGHT_DTYPE, count=count, offset=start)
        model.params[e["name"]].tensor.data = arr.reshape(shape).copy()
    return model
