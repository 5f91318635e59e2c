"""Deterministic text-to-parse preprocessing.

Converts raw UTF-8 text (or passage JSONL) into one JSON line per
dependency-parsed sentence. The annotator is rule-based and fully
deterministic: the same input and ruleset version always produce the
same bytes.
"""

RULESET_VERSION = 1

from .annotate import annotate_passages, annotate_text  # noqa: E402,F401
