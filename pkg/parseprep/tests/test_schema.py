"""The committed goldens conform to the bundled JSON Schema, and bad records fail it."""

import copy
import json
from importlib import resources
from pathlib import Path

import pytest
from jsonschema import Draft202012Validator

DATA = Path(__file__).parent / "data"

SCHEMA = json.loads(
    resources.files("parseprep").joinpath("schema.json").read_text(encoding="utf-8")
)
VALIDATOR = Draft202012Validator(SCHEMA)


def golden_records() -> list[dict]:
    records = []
    for name in ("sample.golden.jsonl", "sample_passages.golden.jsonl"):
        with open(DATA / name, encoding="utf-8") as fh:
            records.extend(json.loads(line) for line in fh)
    return records


def test_schema_itself_is_valid():
    Draft202012Validator.check_schema(SCHEMA)


def test_all_golden_records_validate():
    records = golden_records()
    assert len(records) == 14
    for record in records:
        VALIDATOR.validate(record)


def mutate(record: dict, **changes) -> dict:
    broken = copy.deepcopy(record)
    broken.update(changes)
    return broken


def test_missing_required_field_rejected():
    record = golden_records()[0]
    broken = copy.deepcopy(record)
    del broken["raw_text"]
    assert not VALIDATOR.is_valid(broken)


def test_unknown_top_level_field_rejected():
    record = golden_records()[0]
    assert not VALIDATOR.is_valid(mutate(record, parser="external"))


def test_negative_passage_id_rejected():
    record = golden_records()[0]
    assert not VALIDATOR.is_valid(mutate(record, passage_id=-1))


def test_bad_token_head_rejected():
    record = golden_records()[0]
    broken = copy.deepcopy(record)
    broken["tokens"][0]["head"] = -2
    assert not VALIDATOR.is_valid(broken)


def test_unknown_pos_tag_rejected():
    record = golden_records()[0]
    broken = copy.deepcopy(record)
    broken["tokens"][0]["pos"] = "NOUNS"
    assert not VALIDATOR.is_valid(broken)


def test_extra_token_field_rejected():
    record = golden_records()[0]
    broken = copy.deepcopy(record)
    broken["tokens"][0]["confidence"] = 1.0
    assert not VALIDATOR.is_valid(broken)


def test_empty_token_list_rejected():
    record = golden_records()[0]
    assert not VALIDATOR.is_valid(mutate(record, tokens=[]))


@pytest.mark.parametrize("field", ["doc_id", "raw_text"])
def test_empty_strings_rejected(field):
    record = golden_records()[0]
    assert not VALIDATOR.is_valid(mutate(record, **{field: ""}))
