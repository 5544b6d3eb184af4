from pathlib import Path

import numpy as np
import pytest

from app.core.checkpoint import save_checkpoint
from app.models.cdn import ModelConfig
from app.services.cdn_model import CDNModel, train
from app.services.data_pipeline import build_vocab, split
from app.services.smiles import normalize
from app.tests import TEST_CONFIG


def write_lines(path: Path, lines) -> Path:
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    return path


@pytest.fixture
def training_smiles():
    return list(TEST_CONFIG["training_smiles"])


@pytest.fixture
def vocabulary(training_smiles):
    return build_vocab(training_smiles + TEST_CONFIG["reference_smiles"])


@pytest.fixture
def tiny_config():
    return ModelConfig(**TEST_CONFIG["tiny_model"])


@pytest.fixture
def tiny_model(tiny_config, vocabulary):
    return CDNModel(tiny_config, vocabulary)


@pytest.fixture
def tiny_split(training_smiles, vocabulary, tiny_config):
    return split(
        training_smiles,
        seed=0,
        vocabulary=vocabulary,
        max_len=tiny_config.max_len,
        validation_size=2,
        test_size=2,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def corpus_file(tmp_path, training_smiles):
    return write_lines(tmp_path / "corpus.smi", training_smiles)


@pytest.fixture(scope="session")
def trained_checkpoint(tmp_path_factory):
    """A briefly trained tiny model saved to disk, shared by CLI tests"""
    smiles = list(TEST_CONFIG["training_smiles"])
    vocabulary = build_vocab(smiles + TEST_CONFIG["reference_smiles"])
    cfg = ModelConfig(**TEST_CONFIG["tiny_model"])
    corpus_split = split(smiles, seed=0, vocabulary=vocabulary, max_len=cfg.max_len, validation_size=2, test_size=2)
    checkpoint = train(corpus_split, cfg)
    path = tmp_path_factory.mktemp("model") / "model.cdn"
    save_checkpoint(checkpoint, path)
    write_lines(path.parent / "test.smi", [seq.smiles for seq in corpus_split.test])
    return path


def desk_corpus(size: int = 2000, seed: int = 0):
    """Deterministic drug-like corpus: substituted aromatic and saturated rings"""
    substituents = TEST_CONFIG["desk_substituents"]
    molecules = set()
    for scaffold in TEST_CONFIG["desk_scaffolds"]:
        for a in substituents:
            for b in substituents:
                molecules.add(normalize(scaffold.format(a=a, b=b)))
    ordered = sorted(molecules)
    np.random.default_rng(seed).shuffle(ordered)
    return ordered[:size]


@pytest.fixture(scope="session")
def desk_split():
    corpus = desk_corpus()
    return split(corpus, seed=0, validation_size=250, test_size=250)


@pytest.fixture(scope="session")
def desk_model(desk_split):
    """Reduced-size model trained on the desk corpus, shared by the trend tests"""
    checkpoint = train(desk_split, ModelConfig(**TEST_CONFIG["desk_model"]))
    return CDNModel.from_checkpoint(checkpoint)
