"""
Custom exception classes

Every error raised by the toolkit derives from CDNError so the CLI can map
library failures to exit codes in one place.
"""

from typing import Optional


class CDNError(Exception):
    """Base class for all toolkit errors"""


# SMILES grammar and chemistry

class SmilesError(CDNError, ValueError):
    """Problem with a SMILES string, optionally pinned to a character position"""

    def __init__(self, message: str, position: Optional[int] = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class EmptySmiles(SmilesError):
    pass


class UnknownCharacter(SmilesError):
    pass


class UnterminatedBracket(SmilesError):
    pass


class InvalidBracketAtom(SmilesError):
    pass


class UnbalancedBranch(SmilesError):
    pass


class UnclosedRing(SmilesError):
    def __init__(self, digit: str, position: Optional[int] = None):
        self.digit = digit
        super().__init__(f"Ring bond {digit} opened but never closed", position)


class DanglingBond(SmilesError):
    pass


class MultiComponent(SmilesError):
    pass


class RingBondConflict(SmilesError):
    pass


class DuplicateBond(SmilesError):
    pass


class NotValid(SmilesError):
    pass


# Tensor core

class TensorError(CDNError):
    pass


class ShapeMismatch(TensorError, ValueError):
    pass


class IndexOutOfRange(TensorError, IndexError):
    pass


class StateShapeMismatch(TensorError, ValueError):
    pass


class NonFiniteValue(TensorError, FloatingPointError):
    pass


# Data pipeline

class DataError(CDNError):
    pass


class EmptyCorpus(DataError, ValueError):
    pass


class UnknownToken(DataError, KeyError):
    def __init__(self, token: str, position: int):
        self.token = token
        self.position = position
        super().__init__(f"Token {token!r} at position {position} is not in the vocabulary")

    def __str__(self) -> str:
        return self.args[0]


class SequenceTooLong(DataError, ValueError):
    pass


# Model

class ModelError(CDNError):
    pass


class VocabularyMismatch(ModelError, ValueError):
    def __init__(self, message: str, position: Optional[int] = None):
        self.position = position
        super().__init__(message)


class EmptySplit(ModelError, ValueError):
    pass


class DivergedLoss(ModelError, FloatingPointError):
    pass


class CheckpointFormatError(ModelError, ValueError):
    pass


# Evaluation

class EvaluationError(CDNError):
    pass


class ClassTooSmall(EvaluationError, ValueError):
    pass
