"""End-to-end command tests driving run() in process."""

import json

import pytest

from factmem.cli import load_config_file, run
from factmem.extraction import write_parse_jsonl
from factmem.model import load_checkpoint

from factories import doc_sentences, svo_item


@pytest.fixture()
def workspace(tmp_path, monkeypatch):
    """A document, its parses, and isolated artifact directories."""
    monkeypatch.delenv("SMART_HOME", raising=False)
    items = [
        svo_item("relay", "trips", "tank"),
        svo_item("pump", "feeds", "line"),
        svo_item("motor", "drives", "shaft"),
        svo_item("valve", "opens", "duct"),
    ]
    text = " ".join(raw for raw, _ in items)
    doc = tmp_path / "manual.txt"
    doc.write_text(text + "\n what does the relay pump motor valve drive feed trip open")
    _, sentences = doc_sentences(text, items, doc_id="manual")
    parses = tmp_path / "parses.jsonl"
    write_parse_jsonl(parses, sentences)
    return {
        "root": tmp_path,
        "doc": doc,
        "text": text,
        "parses": parses,
        "out": tmp_path / "compiled",
    }


def ingest_args(ws, extra=(), out=None):
    return [
        "ingest", str(ws["doc"]), "--parses", str(ws["parses"]),
        "--out", str(out or ws["out"]), "--doc-id", "manual",
        "--preset", "toy", "--set", "include_extractor=true",
        "--set", "fact_proj_dim=2", "--set", "d_model=6", "--set", "d_head=3",
        "--set", "memory_dim=6", "--set", "mem_d_k=3", "--set", "d_ff=12",
        "--seed", "0", *extra,
    ]


def test_unknown_subcommand_exits_1(capsys):
    assert run(["frobnicate"]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_required_flag_exits_1(capsys):
    assert run(["extract"]) == 1
    err = capsys.readouterr().err
    assert "--parses" in err


def test_unreadable_file_names_the_flag(tmp_path, capsys):
    assert run(["extract", "--parses", str(tmp_path / "nope.jsonl")]) == 2
    # the error message points at the offending path
    assert "nope.jsonl" in capsys.readouterr().err


def test_ingest_then_query_round_trip(workspace, capsys):
    ws = workspace
    assert run(ingest_args(ws)) == 0
    out = capsys.readouterr().out
    assert "compiled" in out and "facts" in out
    assert (ws["out"] / "doc_manifest.json").exists()

    # second ingest reuses the unchanged compilation
    assert run(ingest_args(ws)) == 0
    assert "reusing" in capsys.readouterr().out

    code = run([
        "query", "what does the relay trip", "--doc", str(ws["out"]),
        "--ckpt", str(ws["root"] / "missing"), "--preset", "toy",
    ])
    # query without a checkpoint must fail loudly, not invent a model
    assert code == 1


def test_query_with_checkpoint_prints_provenance(workspace, capsys):
    ws = workspace
    # build a checkpoint via stage 1, then compile with those weights
    ckpt = ws["root"] / "ckpt"
    corpus = ws["root"] / "corpus.txt"
    corpus.write_text(ws["doc"].read_text().replace("\n", " ") + "\n")
    assert run([
        "train", "--stage", "1", "--data", str(corpus), "--ckpt", str(ckpt),
        "--steps", "2", "--preset", "toy", "--set", "include_extractor=true",
        "--set", "fact_proj_dim=2", "--set", "d_model=6", "--set", "d_head=3",
        "--set", "memory_dim=6", "--set", "mem_d_k=3", "--set", "d_ff=12",
        "--seed", "0",
    ]) == 0
    assert run(ingest_args(ws, extra=["--ckpt", str(ckpt)])) == 0
    capsys.readouterr()

    assert run([
        "query", "what does the relay trip", "--doc", str(ws["out"]),
        "--ckpt", str(ckpt), "--seed", "0",
    ]) == 0
    out = capsys.readouterr().out
    assert "provenance:" in out
    assert "manual/p0/s" in out

    assert run([
        "query", "what does the relay trip", "--doc", str(ws["out"]),
        "--ckpt", str(ckpt), "--seed", "0", "--quiet",
    ]) == 0
    assert "provenance:" not in capsys.readouterr().out


def test_query_new_doc_cold_path(workspace, capsys):
    ws = workspace
    ckpt = ws["root"] / "ckpt"
    corpus = ws["root"] / "corpus.txt"
    corpus.write_text(ws["doc"].read_text().replace("\n", " ") + "\n")
    assert run([
        "train", "--stage", "1", "--data", str(corpus), "--ckpt", str(ckpt),
        "--steps", "2", "--preset", "toy", "--set", "include_extractor=true",
        "--set", "fact_proj_dim=2", "--set", "d_model=6", "--set", "d_head=3",
        "--set", "memory_dim=6", "--set", "mem_d_k=3", "--set", "d_ff=12",
        "--seed", "0",
    ]) == 0
    capsys.readouterr()
    clean = ws["root"] / "clean.txt"
    clean.write_text(ws["text"])
    assert run([
        "query", "what does the pump feed", "--new-doc", str(clean),
        "--parses", str(ws["parses"]), "--ckpt", str(ckpt), "--seed", "0",
    ]) == 0
    assert "provenance:" in capsys.readouterr().out
    # --new-doc without --parses is a usage error naming the flag
    assert run([
        "query", "q", "--new-doc", str(clean), "--ckpt", str(ckpt),
    ]) == 1
    assert "--parses" in capsys.readouterr().err


def test_extract_writes_fact_jsonl(workspace, tmp_path, capsys):
    ws = workspace
    out = tmp_path / "facts.jsonl"
    assert run([
        "extract", "--parses", str(ws["parses"]), "--out", str(out),
        "--preset", "toy", "--set", "include_extractor=true",
        "--set", "fact_proj_dim=2", "--set", "d_model=6", "--set", "d_head=3",
        "--set", "memory_dim=6", "--set", "mem_d_k=3", "--set", "d_ff=12",
        "--seed", "0",
    ]) == 0
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(lines) == 4
    assert lines[0]["subject"] == "the relay"

    # index the extracted facts into a standalone store
    store_dir = tmp_path / "store"
    assert run(["index", "--facts", str(out), "--out", str(store_dir)]) == 0
    assert (store_dir / "rows.f32").exists()


def test_train_stages_2_and_3_from_checkpoint(workspace, tmp_path, capsys):
    ws = workspace
    ckpt = tmp_path / "ckpt"
    corpus = tmp_path / "corpus.txt"
    corpus.write_text(ws["text"] + "\n")
    common = [
        "--preset", "toy", "--set", "include_extractor=true",
        "--set", "fact_proj_dim=2", "--set", "d_model=6", "--set", "d_head=3",
        "--set", "memory_dim=6", "--set", "mem_d_k=3", "--set", "d_ff=12",
        "--seed", "0", "--ckpt", str(ckpt),
    ]
    assert run(["train", "--stage", "1", "--data", str(corpus),
                "--steps", "2", *common]) == 0
    pairs = tmp_path / "pairs.jsonl"
    with open(pairs, "w") as fh:
        for sid, query in enumerate([
            "what does the relay trip", "what does the pump feed",
            "what does the motor drive", "what does the valve open",
        ]):
            fh.write(json.dumps({
                "query": query, "doc_id": "manual", "passage_id": 0,
                "sent_id": sid, "clause": 0,
            }) + "\n")
    csv_out = tmp_path / "loss.csv"
    assert run(["train", "--stage", "2", "--data", str(pairs),
                "--parses", str(ws["parses"]), "--steps", "3",
                "--loss-csv", str(csv_out), *common]) == 0
    assert csv_out.exists()
    assert run(["train", "--stage", "3", "--data", str(pairs),
                "--parses", str(ws["parses"]), "--steps", "2", *common]) == 0
    model = load_checkpoint(ckpt)
    assert model.stage == 3
    out = capsys.readouterr().out
    assert "stage 3" in out


def test_eval_and_inspect(workspace, tmp_path, capsys):
    ws = workspace
    ckpt = ws["root"] / "ckpt"
    corpus = ws["root"] / "corpus.txt"
    corpus.write_text(ws["doc"].read_text().replace("\n", " ") + "\n")
    assert run([
        "train", "--stage", "1", "--data", str(corpus), "--ckpt", str(ckpt),
        "--steps", "2", "--preset", "toy", "--set", "include_extractor=true",
        "--set", "fact_proj_dim=2", "--set", "d_model=6", "--set", "d_head=3",
        "--set", "memory_dim=6", "--set", "mem_d_k=3", "--set", "d_ff=12",
        "--seed", "0",
    ]) == 0
    assert run(ingest_args(ws, extra=["--ckpt", str(ckpt)])) == 0
    capsys.readouterr()

    testset = tmp_path / "testset.jsonl"
    testset.write_text(json.dumps({
        "query": "what does the relay trip",
        "reference": "the relay trips the tank",
        "doc_id": "manual",
    }) + "\n")
    report_json = tmp_path / "report.json"
    assert run([
        "eval", "--testset", str(testset), "--doc", str(ws["out"]),
        "--ckpt", str(ckpt), "--json", str(report_json), "--seed", "0",
    ]) == 0
    out = capsys.readouterr().out
    assert "bleu1" in out and "efficiency" in out
    assert json.loads(report_json.read_text())["metadata"]["example_count"] == 1

    assert run(["inspect", "--doc", str(ws["out"]), "--fact", "0"]) == 0
    out = capsys.readouterr().out
    assert "subject:" in out and "context:" in out
    assert run(["inspect", "--doc", str(ws["out"]), "--fact", "999"]) == 1


def test_smart_home_supplies_default_paths(workspace, monkeypatch, capsys):
    ws = workspace
    home = ws["root"] / "home"
    monkeypatch.setenv("SMART_HOME", str(home))
    args = ingest_args(ws)
    args = [a for i, a in enumerate(args)
            if args[max(0, i - 1)] != "--out" and a != "--out"]
    assert run(args) == 0
    assert (home / "doc" / "doc_manifest.json").exists()


def test_config_file_precedence(tmp_path, workspace, capsys):
    ws = workspace
    cfg = tmp_path / "settings.cfg"
    cfg.write_text(
        "# model sizing\n"
        "d_model = 6\nd_head = 3\nd_ff = 12\nmemory_dim = 6\nmem_d_k = 3\n"
        "fact_proj_dim = 2\ninclude_extractor = true\n"
    )
    assert load_config_file(cfg)["d_model"] == "6"
    out = tmp_path / "compiled"
    assert run([
        "ingest", str(ws["doc"]), "--parses", str(ws["parses"]),
        "--out", str(out), "--doc-id", "manual", "--preset", "toy",
        "--config", str(cfg), "--seed", "0",
    ]) == 0
    assert (out / "doc_manifest.json").exists()
    bad = tmp_path / "bad.cfg"
    bad.write_text("no equals sign here\n")
    assert run([
        "ingest", str(ws["doc"]), "--parses", str(ws["parses"]),
        "--out", str(out), "--preset", "toy", "--config", str(bad),
    ]) == 2


def test_unknown_setting_is_named(workspace, capsys):
    ws = workspace
    assert run(ingest_args(ws, extra=["--set", "bogus_knob=7"])) == 1
    assert "bogus_knob" in capsys.readouterr().err
