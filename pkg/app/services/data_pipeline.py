"""
Corpus ingestion, vocabulary building, sequence encoding and splitting
"""

import logging
import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from app.models.sequence import END, PAD, SPECIAL_TOKENS, START, CorpusSplit, EncodedSequence, Vocabulary
from app.services.smiles import is_valid_smiles, normalize_or_none
from app.utils.exceptions import EmptyCorpus, SequenceTooLong, UnknownToken

logger = logging.getLogger(__name__)

DEFAULT_MAX_LEN = 50

# Above this size the held-out sets have a fixed size instead of 5% each
LARGE_CORPUS = 10_000
LARGE_HELD_OUT = 5_000
HELD_OUT_FRACTION = 0.05

_SYMBOL_RE = re.compile(r"Cl|Br|.", re.DOTALL)

PathLike = Union[str, Path]


def sequence_tokens(s: str) -> List[str]:
    """Model-level symbols: single characters, with Cl and Br kept whole"""
    return _SYMBOL_RE.findall(s)


def _normalized_key(s: str) -> str:
    key = normalize_or_none(s)
    return key if key is not None else s


def load_smiles_list(path: PathLike) -> List[str]:
    """Read one SMILES per line, skipping blank lines"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"SMILES file not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        return [line.strip() for line in handle if line.strip()]


def load_classes(path: PathLike) -> Dict[str, List[str]]:
    """Read a "name<TAB>SMILES" file into name -> members, in file order"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Class file not found: {path}")
    classes: Dict[str, List[str]] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            name, sep, smiles = line.partition("\t")
            if not sep or not smiles.strip():
                raise ValueError(f"{path}:{line_number}: expected 'name<TAB>SMILES'")
            classes.setdefault(name.strip(), []).append(smiles.strip())
    return classes


def load_corpus(path: PathLike, max_len: int = DEFAULT_MAX_LEN) -> List[str]:
    """Load a SMILES corpus: trimmed, length and validity filtered, deduplicated"""
    lines = load_smiles_list(path)
    logger.info(f"📥 Loading corpus {path} ({len(lines)} lines)")

    corpus: List[str] = []
    seen = set()
    too_long = invalid = duplicates = 0
    for s in lines:
        if len(sequence_tokens(s)) > max_len:
            too_long += 1
            continue
        if not is_valid_smiles(s):
            invalid += 1
            continue
        key = _normalized_key(s)
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        corpus.append(s)

    if too_long:
        logger.info(f"Dropped {too_long} entries longer than {max_len} tokens")
    if invalid:
        logger.info(f"Dropped {invalid} invalid entries")
    if duplicates:
        logger.info(f"Dropped {duplicates} duplicate entries")
    if not corpus:
        raise EmptyCorpus(f"No usable molecules in {path}")

    logger.info(f"✅ Corpus ready: {len(corpus)} molecules")
    return corpus


def build_vocab(corpus: Iterable[str]) -> Vocabulary:
    """Specials followed by the sorted set of corpus symbols"""
    symbols = set()
    for s in corpus:
        symbols.update(sequence_tokens(s))
    return Vocabulary(sorted(symbols - set(SPECIAL_TOKENS)))


def encode(s: str, vocabulary: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> EncodedSequence:
    """START, symbols, END, then PAD up to max_len + 2 positions"""
    symbols = sequence_tokens(s)
    if len(symbols) > max_len:
        raise SequenceTooLong(f"{len(symbols)} tokens exceed the maximum of {max_len}")

    indices = np.full(max_len + 2, PAD, dtype=np.int64)
    indices[0] = START
    position = 0
    for i, symbol in enumerate(symbols, start=1):
        if symbol not in vocabulary:
            raise UnknownToken(symbol, position)
        indices[i] = vocabulary.index[symbol]
        position += len(symbol)
    indices[len(symbols) + 1] = END
    return EncodedSequence(indices=indices, true_length=len(symbols), smiles=s)


def decode(seq: Union[EncodedSequence, Sequence[int]], vocabulary: Vocabulary) -> str:
    """Join the symbols after START up to the first END; other specials are skipped"""
    indices = seq.indices if isinstance(seq, EncodedSequence) else seq
    out = []
    for index in indices:
        index = int(index)
        if index == END:
            break
        if index < len(SPECIAL_TOKENS):
            continue
        out.append(vocabulary.token(index))
    return "".join(out)


def encode_all(corpus: Sequence[str], vocabulary: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> List[EncodedSequence]:
    return [encode(s, vocabulary, max_len) for s in corpus]


def _held_out_size(n: int) -> int:
    if n > LARGE_CORPUS:
        return LARGE_HELD_OUT
    if n < 3:
        return 0
    return max(1, int(round(n * HELD_OUT_FRACTION)))


def split(
    corpus: Sequence[str],
    seed: int,
    exclusion_list: Sequence[str] = (),
    vocabulary: Optional[Vocabulary] = None,
    max_len: int = DEFAULT_MAX_LEN,
    validation_size: Optional[int] = None,
    test_size: Optional[int] = None,
) -> CorpusSplit:
    """Deterministically shuffle and partition a corpus into train/validation/test.

    Molecules matching the exclusion list (by normalized form) are removed
    first, and duplicates by normalized form are collapsed so the three sets
    are disjoint. Corpora above 10,000 molecules get 5,000-molecule held-out
    sets; smaller ones are split 90/5/5. Explicit sizes override both.
    """
    excluded_keys = {_normalized_key(s) for s in exclusion_list}

    kept: List[str] = []
    kept_keys = set()
    excluded: List[str] = []
    for s in corpus:
        key = _normalized_key(s)
        if key in excluded_keys:
            excluded.append(s)
            continue
        if key in kept_keys:
            continue
        kept_keys.add(key)
        kept.append(s)
    if excluded:
        logger.info(f"Excluded {len(excluded)} molecules before splitting")

    if vocabulary is None:
        vocabulary = build_vocab(kept)

    n = len(kept)
    n_validation = _held_out_size(n) if validation_size is None else validation_size
    n_test = _held_out_size(n) if test_size is None else test_size
    if n_validation < 0 or n_test < 0 or n_validation + n_test > n:
        raise ValueError(f"Held-out sizes {n_validation}/{n_test} do not fit a corpus of {n}")

    order = np.random.default_rng(seed).permutation(n)
    shuffled = [kept[i] for i in order]
    validation = shuffled[:n_validation]
    test = shuffled[n_validation:n_validation + n_test]
    train = shuffled[n_validation + n_test:]

    result = CorpusSplit(
        train=encode_all(train, vocabulary, max_len),
        validation=encode_all(validation, vocabulary, max_len),
        test=encode_all(test, vocabulary, max_len),
        seed=seed,
        vocabulary=vocabulary,
        excluded=excluded,
    )
    logger.info(f"Split sizes {result.sizes()}")
    return result
