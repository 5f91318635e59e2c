"""Command-line surface: ingest, extract, index, train, query, eval, inspect.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.
Configuration precedence is flags > config file > built-in defaults; the
config file is flat ``key = value`` text (# comments allowed). The
``SMART_HOME`` environment variable supplies default artifact paths.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import (
    DataFormatError,
    FactmemError,
    NumericError,
    ShapeError,
    UsageError,
)
from .extraction import (
    extract_facts,
    fact_to_json,
    read_facts_jsonl,
    read_parse_jsonl,
    write_facts_jsonl,
)
from .memory import MemoryStore, save_store
from .metrics import evaluate, format_report, read_eval_jsonl, report_to_json
from .model import Model, ModelConfig, load_checkpoint, save_checkpoint
from .pipeline import (
    answer_cold,
    answer_precompiled,
    compile_or_load,
    load_compiled,
)
from .training import (
    TrainingConfig,
    build_fact_examples,
    read_pairs_jsonl,
    train_stage,
    write_loss_csv,
)
from .vocab import Vocabulary


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of calling sys.exit."""

    def error(self, message: str):
        raise UsageError(message)


def _home() -> Path | None:
    root = os.environ.get("SMART_HOME")
    return Path(root) if root else None


def _default_path(name: str) -> Path | None:
    home = _home()
    return home / name if home else None


def _require(value, flag: str):
    if value is None:
        raise UsageError(
            f"{flag} is required (or set SMART_HOME for a default location)"
        )
    return value


def load_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and # comments ignored."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"--config file unreadable: {path} ({exc})") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _coerce(value: str, kind: type):
    if kind is bool:
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"expected a boolean, got {value!r}")
    return kind(value)


def _model_config(
    preset: str, vocab_size: int, overrides: dict[str, str]
) -> ModelConfig:
    if preset == "toy":
        base = ModelConfig.toy(vocab_size)
    elif preset == "desk":
        base = ModelConfig.desk(vocab_size)
    elif preset == "published":
        base = ModelConfig.published()
    else:
        raise UsageError(
            f"--preset must be toy, desk, or published, not {preset!r}"
        )
    if not overrides:
        return base
    fields = {f.name: f.type for f in dataclasses.fields(ModelConfig)}
    values = dataclasses.asdict(base)
    for key, raw in overrides.items():
        if key not in fields:
            raise UsageError(f"unknown model setting {key!r} in --set/--config")
        kind = type(values[key])
        values[key] = _coerce(raw, kind)
    return ModelConfig(**values)


def _read_text(path: str | Path, flag: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"{flag} file unreadable: {path} ({exc})") from exc


def _load_file(flag: str, loader, path):
    """Run a module loader, mapping I/O failures to the offending flag."""
    try:
        return loader(path)
    except OSError as exc:
        raise DataFormatError(f"{flag} file unreadable: {path} ({exc})") from exc


def _load_model(ckpt, *, fallback_corpus: str | None, preset: str,
                overrides: dict[str, str], seed: int) -> Model:
    """A trained checkpoint when given; otherwise a fresh seeded model whose
    vocabulary is built from the corpus text."""
    if ckpt is not None and (Path(ckpt) / "model.json").exists():
        return load_checkpoint(ckpt)
    if fallback_corpus is None:
        raise UsageError(f"--ckpt has no checkpoint: {ckpt}")
    vocab = Vocabulary.build([fallback_corpus])
    cfg = _model_config(preset, len(vocab), overrides)
    return Model(cfg, vocab, seed=seed)


def _overrides(args) -> dict[str, str]:
    merged: dict[str, str] = {}
    if args.config:
        merged.update(load_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        merged[key.strip()] = value.strip()
    return merged


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_ingest(args) -> int:
    doc_path = _require(args.document, "document path")
    out = _require(args.out or _default_path("doc"), "--out")
    text = _read_text(doc_path, "document")
    sentences = _load_file("--parses", read_parse_jsonl, _require(args.parses, "--parses"))
    model = _load_model(
        args.ckpt, fallback_corpus=text, preset=args.preset,
        overrides=_overrides(args), seed=args.seed,
    )
    doc_id = args.doc_id or Path(doc_path).stem
    compiled, reused = compile_or_load(model, out, doc_id, text, sentences)
    state = "unchanged, reusing" if reused else "compiled"
    print(
        f"{state} {doc_id!r}: {len(compiled.passages)} passages, "
        f"{compiled.fact_count} facts -> {out}"
    )
    return 0


def _cmd_extract(args) -> int:
    sentences = _load_file("--parses", read_parse_jsonl, _require(args.parses, "--parses"))
    corpus = " ".join(s.raw_text for s in sentences)
    model = _load_model(
        args.ckpt, fallback_corpus=corpus, preset=args.preset,
        overrides=_overrides(args), seed=args.seed,
    )
    weights = model.extractor_weights()
    facts = []
    for sent in sentences:
        facts.extend(extract_facts(sent, weights))
    if args.out:
        write_facts_jsonl(args.out, facts)
        print(f"{len(facts)} facts -> {args.out}")
    else:
        for fact in facts:
            print(json.dumps(fact_to_json(fact), ensure_ascii=False))
    return 0


def _cmd_index(args) -> int:
    facts = _load_file("--facts", read_facts_jsonl, _require(args.facts, "--facts"))
    if not facts:
        raise UsageError(f"--facts file {args.facts} holds no facts")
    out = _require(args.out or _default_path("store"), "--out")
    store = MemoryStore(facts[0].m.shape[0])
    store.add_facts(facts)
    save_store(store, out)
    print(f"{len(store)} unique rows -> {out}")
    return 0


def _cmd_train(args) -> int:
    ckpt = _require(args.ckpt or _default_path("checkpoint"), "--ckpt")
    data_path = _require(args.data, "--data")
    overrides = _overrides(args)
    tc_kwargs = {}
    for name in ("lr", "batch_size", "warmup_steps", "seed",
                 "checkpoint_interval"):
        flag_value = getattr(args, name)
        if flag_value is not None:
            tc_kwargs[name] = flag_value
        elif name in overrides:
            kind = float if name == "lr" else int
            tc_kwargs[name] = _coerce(overrides.pop(name), kind)
    cfg = TrainingConfig.for_stage(args.stage, max_steps=args.steps, **tc_kwargs)

    if args.stage == 1:
        corpus = _read_text(data_path, "--data")
        lines = [ln for ln in corpus.splitlines() if ln.strip()]
        model = _load_model(
            args.ckpt, fallback_corpus=corpus, preset=args.preset,
            overrides=overrides, seed=args.seed or 0,
        )
        curve = train_stage(1, model, lines, cfg)
    else:
        model = _load_model(
            args.ckpt, fallback_corpus=None, preset=args.preset,
            overrides=overrides, seed=args.seed or 0,
        )
        sentences = _load_file("--parses", read_parse_jsonl, _require(args.parses, "--parses"))
        pairs = _load_file("--data", read_pairs_jsonl, data_path)
        examples = build_fact_examples(pairs, sentences, model)
        curve = train_stage(args.stage, model, examples, cfg)
    save_checkpoint(model, ckpt)
    if args.loss_csv:
        write_loss_csv(args.loss_csv, curve)
    print(
        f"stage {args.stage}: {len(curve)} steps, "
        f"final loss {curve[-1].total:.6f} -> {ckpt}"
    )
    return 0


def _render_answer(result, quiet: bool) -> None:
    record = result.record
    print(record.answer_text if record.answer_text else "(empty answer)")
    if record.unsupported:
        print("[unsupported: no facts were available for this query]")
    if quiet or not record.provenance:
        return
    print("provenance:")
    for p in record.provenance:
        print(
            f"  [{p.alpha:.3f}] ({p.subject} | {p.relation} | {p.object}) "
            f"score={p.retrieval_score:.3f} "
            f"source={p.doc_id}/p{p.passage_id}/s{p.sent_id} "
            f"chars={p.char_start}..{p.char_end}"
        )


def _answer_once(args, model, compiled, cold_inputs, question) -> None:
    if cold_inputs is not None:
        text, sentences, doc_id = cold_inputs
        result = answer_cold(
            model, doc_id, text, sentences, question,
            max_new_tokens=args.max_new_tokens, mode=args.mode,
            temperature=args.temperature, seed=args.seed or 0,
        )
    else:
        result = answer_precompiled(
            model, compiled, question,
            max_new_tokens=args.max_new_tokens, mode=args.mode,
            temperature=args.temperature, seed=args.seed or 0,
        )
    _render_answer(result, args.quiet)


def _cmd_query(args) -> int:
    ckpt = _require(args.ckpt or _default_path("checkpoint"), "--ckpt")
    model = _load_model(
        ckpt, fallback_corpus=None, preset=args.preset,
        overrides=_overrides(args), seed=args.seed or 0,
    )
    cold_inputs = None
    compiled = None
    if args.new_doc:
        text = _read_text(args.new_doc, "--new-doc")
        sentences = _load_file("--parses", read_parse_jsonl, _require(args.parses, "--parses"))
        doc_id = sentences[0].doc_id if sentences else Path(args.new_doc).stem
        cold_inputs = (text, sentences, doc_id)
    else:
        doc_dir = _require(args.doc or _default_path("doc"), "--doc")
        compiled = load_compiled(doc_dir)

    if args.repl:
        print("enter a question per line (blank or EOF exits)")
        while True:
            try:
                question = input("? ").strip()
            except EOFError:
                break
            if not question:
                break
            _answer_once(args, model, compiled, cold_inputs, question)
        return 0
    if not args.question:
        raise UsageError("provide a question argument or --repl")
    _answer_once(args, model, compiled, cold_inputs, args.question)
    return 0


def _cmd_eval(args) -> int:
    ckpt = _require(args.ckpt or _default_path("checkpoint"), "--ckpt")
    doc_dir = _require(args.doc or _default_path("doc"), "--doc")
    model = _load_model(
        ckpt, fallback_corpus=None, preset=args.preset,
        overrides=_overrides(args), seed=args.seed or 0,
    )
    compiled = load_compiled(doc_dir)
    examples = _load_file("--testset", read_eval_jsonl, _require(args.testset, "--testset"))
    report = evaluate(
        model, examples, {compiled.doc_id: compiled},
        max_new_tokens=args.max_new_tokens,
    )
    print(format_report(report))
    if args.json:
        report_to_json(report, args.json)
        print(f"report -> {args.json}")
    return 0


def _cmd_inspect(args) -> int:
    doc_dir = _require(args.doc or _default_path("doc"), "--doc")
    compiled = load_compiled(doc_dir)
    fact_id = args.fact
    if not 0 <= fact_id < len(compiled.store):
        raise UsageError(
            f"--fact {fact_id} out of range; store holds {len(compiled.store)} rows"
        )
    stored = compiled.store.meta[fact_id]
    fact = stored.fact
    print(f"fact {fact_id} (confidence {fact.confidence})")
    print(f"  subject:  {fact.subject_text}")
    print(f"  relation: {fact.relation_text}")
    print(f"  object:   {fact.object_text}")
    if fact.numeric is not None:
        print(f"  numeric:  {fact.numeric.values} {fact.numeric.unit or '(unitless)'}")
    prov = fact.provenance
    passage = compiled.passages[prov.passage_id]
    lo = max(0, prov.char_start - 40)
    hi = min(len(passage.text), prov.char_end + 40)
    print(f"  source:   {prov.doc_id}/p{prov.passage_id}/s{prov.sent_id} "
          f"chars {prov.char_start}..{prov.char_end}")
    print(f"  context:  ...{passage.text[lo:hi]}...")
    norm = float(np.linalg.norm(compiled.store.rows[fact_id].astype(np.float64)))
    print(f"  row norm: {norm:.6f}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="factmem", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--ckpt", default=None, help="checkpoint directory")
    common.add_argument("--preset", default="desk",
                        help="model size preset: toy, desk, or published")
    common.add_argument("--config", default=None,
                        help="flat key = value settings file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one setting (repeatable)")

    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ingest", parents=[common])
    p.add_argument("document", help="raw UTF-8 document")
    p.add_argument("--parses", required=True, help="sentence parse JSONL")
    p.add_argument("--out", default=None, help="compiled output directory")
    p.add_argument("--doc-id", default=None)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("extract", parents=[common])
    p.add_argument("--parses", required=True)
    p.add_argument("--out", default=None, help="facts JSONL (default stdout)")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("index", parents=[common])
    p.add_argument("--facts", required=True, help="facts JSONL from extract")
    p.add_argument("--out", default=None, help="store output directory")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("train", parents=[common])
    p.add_argument("--stage", type=int, required=True, choices=(1, 2, 3))
    p.add_argument("--data", required=True,
                   help="stage 1: corpus text; stages 2-3: pairs JSONL")
    p.add_argument("--parses", default=None,
                   help="sentence parse JSONL (stages 2-3)")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--warmup-steps", dest="warmup_steps", type=int, default=None)
    p.add_argument("--checkpoint-interval", dest="checkpoint_interval",
                   type=int, default=None)
    p.add_argument("--loss-csv", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("query", parents=[common])
    p.add_argument("question", nargs="?", default=None)
    p.add_argument("--doc", default=None, help="compiled document directory")
    p.add_argument("--new-doc", default=None,
                   help="answer a raw document without compiling it")
    p.add_argument("--parses", default=None, help="parses for --new-doc")
    p.add_argument("--repl", action="store_true")
    p.add_argument("--quiet", action="store_true",
                   help="suppress the provenance block")
    p.add_argument("--mode", default="greedy", choices=("greedy", "sample"))
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--max-new-tokens", dest="max_new_tokens", type=int, default=24)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("eval", parents=[common])
    p.add_argument("--testset", required=True, help="JSONL of query/reference/doc_id")
    p.add_argument("--doc", default=None)
    p.add_argument("--json", default=None, help="write machine-readable report")
    p.add_argument("--max-new-tokens", dest="max_new_tokens", type=int, default=24)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("inspect", parents=[common])
    p.add_argument("--doc", default=None)
    p.add_argument("--fact", type=int, required=True, help="store row id")
    p.set_defaults(func=_cmd_inspect)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FactmemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
