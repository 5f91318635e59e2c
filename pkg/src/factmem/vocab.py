"""Word-level vocabulary with fixed special tokens.

Ids 0..4 are reserved: pad, bos, eos, unk, sep. Text is lowercased and split
on whitespace; punctuation handling is the tokenizer caller's business (the
corpus builders strip sentence-final punctuation into separate tokens).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from .errors import DataFormatError, UsageError

PAD, BOS, EOS, UNK, SEP = 0, 1, 2, 3, 4
SPECIALS = ["<pad>", "<bos>", "<eos>", "<unk>", "<sep>"]

_WORD_RE = re.compile(r"[a-z0-9]+(?:[.\-'][a-z0-9]+)*|[^\sa-z0-9]")


def words(text: str) -> list[str]:
    """Lowercase word tokens; interior .-' stay attached (3.5, x-ray, don't)."""
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    """Immutable token <-> id mapping. Unknown words map to <unk>."""

    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if list(self.tokens[:5]) != SPECIALS:
            raise DataFormatError("vocabulary must start with the special tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise DataFormatError("vocabulary contains duplicate tokens")
        object.__setattr__(
            self, "_ids", {t: i for i, t in enumerate(self.tokens)}
        )

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK)

    def token_of(self, idx: int) -> str:
        if not 0 <= idx < len(self.tokens):
            raise UsageError(f"token id {idx} out of range (vocab {len(self)})")
        return self.tokens[idx]

    def encode(self, text: str, bos: bool = False, eos: bool = False) -> list[int]:
        ids = [self._ids.get(w, UNK) for w in words(text)]
        if bos:
            ids.insert(0, BOS)
        if eos:
            ids.append(EOS)
        return ids

    def decode(self, ids: Iterable[int], skip_special: bool = True) -> str:
        out = []
        for i in ids:
            if skip_special and i in (PAD, BOS, EOS):
                continue
            out.append(self.token_of(i))
        return " ".join(out)

    @classmethod
    def build(
        cls,
        texts: Iterable[str],
        max_size: int | None = None,
        min_count: int = 1,
    ) -> "Vocabulary":
        """Frequency-ordered vocabulary; ties break alphabetically."""
        counts: Counter[str] = Counter()
        for text in texts:
            counts.update(words(text))
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        kept = [w for w, c in ranked if c >= min_count]
        if max_size is not None:
            if max_size <= len(SPECIALS):
                raise UsageError(f"max_size must exceed {len(SPECIALS)}")
            kept = kept[: max_size - len(SPECIALS)]
        return cls(tuple(SPECIALS + kept))
