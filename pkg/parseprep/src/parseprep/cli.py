"""Command line: parseprep <in> <out> [--passages] [--doc-id ID].

Reads raw UTF-8 text (default) or passage JSONL (--passages: one object per
line with at least passage_id and text) and writes one JSON line per parsed
sentence, ordered by passage then sentence. Empty input produces an empty
output file and exit code 0. Exit codes: 0 success, 1 usage or IO error,
2 malformed input data.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .annotate import annotate_passages, annotate_text


class BadInput(Exception):
    pass


def _read_passages(path: Path) -> list[dict]:
    passages = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                passages.append(
                    {"passage_id": int(obj["passage_id"]), "text": str(obj["text"])}
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise BadInput(
                    f"parseprep: {path}:{lineno}: bad passage record ({exc})"
                ) from exc
    return passages


def _write_jsonl(path: Path, lines: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in lines:
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="parseprep",
        description="Annotate text as dependency-parsed sentence JSONL.",
    )
    parser.add_argument("input", help="raw UTF-8 text file, or passage JSONL")
    parser.add_argument("output", help="parsed-sentence JSONL to write")
    parser.add_argument(
        "--passages",
        action="store_true",
        help="treat input as passage JSONL (passage_id + text per line)",
    )
    parser.add_argument(
        "--doc-id",
        default=None,
        help="document id for every record (default: input file stem)",
    )
    args = parser.parse_args(argv)

    in_path = Path(args.input)
    out_path = Path(args.output)
    doc_id = args.doc_id or in_path.stem

    try:
        if args.passages:
            lines = annotate_passages(_read_passages(in_path), doc_id)
        else:
            lines = annotate_text(in_path.read_text(encoding="utf-8"), doc_id)
    except BadInput as exc:
        print(exc, file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"parseprep: cannot read {in_path}: {exc}", file=sys.stderr)
        return 1

    try:
        _write_jsonl(out_path, lines)
    except OSError as exc:
        print(f"parseprep: cannot write {out_path}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
