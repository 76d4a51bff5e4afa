"""Character-level text frontend.

Normalization is lowercase + whitespace collapse; ids 0 and 1 are reserved for
padding and end-of-sequence. The table is serialized next to checkpoints so
inference always tokenizes the way training did.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import normalize_transcript
from .errors import CorpusError, UnknownSymbolError

PAD_ID = 0
EOS_ID = 1


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.ids)


class SymbolTable:
    def __init__(self, symbols: list[str]):
        self.symbols = list(symbols)
        self._to_id = {s: i + 2 for i, s in enumerate(self.symbols)}
        self._from_id = {i + 2: s for i, s in enumerate(self.symbols)}

    @property
    def size(self) -> int:
        return len(self.symbols) + 2

    def id_of(self, symbol: str) -> int:
        return self._to_id[symbol]

    def to_json(self) -> dict:
        return {"symbols": self.symbols, "pad_id": PAD_ID, "eos_id": EOS_ID}

    @classmethod
    def from_json(cls, obj: dict) -> "SymbolTable":
        return cls(obj["symbols"])

    def __eq__(self, other):
        return isinstance(other, SymbolTable) and self.symbols == other.symbols


def build_vocab(transcripts) -> SymbolTable:
    """Deterministic table over all characters of the normalized transcripts."""
    transcripts = list(transcripts)
    if not transcripts:
        raise CorpusError("cannot build a symbol table from zero transcripts")
    chars = set()
    for text in transcripts:
        chars.update(normalize_transcript(text))
    if not chars:
        raise CorpusError("transcripts are empty after normalization")
    return SymbolTable(sorted(chars))


def tokenize(text: str, table: SymbolTable, strict: bool = True) -> TokenSequence:
    normalized = normalize_transcript(text)
    if not normalized:
        raise CorpusError(f"text {text!r} is empty after normalization")
    ids = []
    unknown = []
    for ch in normalized:
        try:
            ids.append(table.id_of(ch))
        except KeyError:
            if strict:
                unknown.append(ch)
            else:
                ids.append(PAD_ID)
    if unknown:
        raise UnknownSymbolError(unknown)
    ids.append(EOS_ID)
    return TokenSequence(tuple(ids))


def detokenize(seq: TokenSequence, table: SymbolTable) -> str:
    chars = []
    for i in seq.ids:
        if i in (PAD_ID, EOS_ID):
            continue
        chars.append(table._from_id[i])
    return "".join(chars)
