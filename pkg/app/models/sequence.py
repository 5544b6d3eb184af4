from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import numpy as np

from app.utils.exceptions import CheckpointFormatError

PAD = 0
START = 1
END = 2
UNK = 3

SPECIALS: Dict[str, int] = {"PAD": PAD, "START": START, "END": END, "UNK": UNK}
SPECIAL_TOKENS = ["<pad>", "<start>", "<end>", "<unk>"]


class Vocabulary:
    """Token inventory with dense, stable indices; specials occupy 0..3"""

    def __init__(self, symbols: Iterable[str]):
        self.tokens: List[str] = list(SPECIAL_TOKENS) + [s for s in symbols if s not in SPECIAL_TOKENS]
        self.index: Dict[str, int] = {token: i for i, token in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("Vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f"Vocabulary({len(self)} tokens)"

    @property
    def symbols(self) -> List[str]:
        """Non-special tokens in index order"""
        return self.tokens[len(SPECIAL_TOKENS):]

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK)

    def token(self, index: int) -> str:
        return self.tokens[index]

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens), "specials": dict(SPECIALS)}

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        try:
            tokens = data["tokens"]
            specials = data["specials"]
        except KeyError as e:
            raise CheckpointFormatError(f"Vocabulary is missing key {e}")
        if specials != SPECIALS or tokens[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise CheckpointFormatError("Vocabulary specials do not match PAD=0, START=1, END=2, UNK=3")
        return cls(tokens[len(SPECIAL_TOKENS):])


@dataclass(frozen=True)
class EncodedSequence:
    indices: np.ndarray  # int64, length max_len + 2
    true_length: int
    smiles: str = ""

    @property
    def max_len(self) -> int:
        return len(self.indices) - 2


@dataclass
class CorpusSplit:
    train: List[EncodedSequence]
    validation: List[EncodedSequence]
    test: List[EncodedSequence]
    seed: int
    vocabulary: Optional[Vocabulary] = None
    excluded: List[str] = field(default_factory=list)

    def sizes(self) -> Dict[str, int]:
        return {"train": len(self.train), "validation": len(self.validation), "test": len(self.test)}
