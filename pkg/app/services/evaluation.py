"""
Generation quality metrics

Per-run reconstruction accuracy, validity and novelty (with their @k
forms), known-drug rediscovery, Levenshtein diversity histograms, latent
class distances and diversity/decoder sweeps.
"""

import logging
from itertools import combinations
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import pdist

from app.models.cdn import DiversityConfig
from app.models.evaluation import (
    ACROSS_ROW,
    PROTOTYPE_VS_GENERATED,
    WITHIN_POPULATION,
    ClassDistanceReport,
    ClassDistanceRow,
    DistanceHistogram,
    DrugHitReport,
    GenerationRun,
    MetricsReport,
    SweepCell,
    UnconditionalReport,
)
from app.models.sequence import SPECIAL_TOKENS, EncodedSequence, Vocabulary
from app.services.cdn_model import CDNModel, diverse_sample
from app.services.data_pipeline import sequence_tokens
from app.services.smiles import is_valid_smiles, levenshtein, normalize_or_none
from app.utils.exceptions import ClassTooSmall

logger = logging.getLogger(__name__)

END_SYMBOL = SPECIAL_TOKENS[2]

# scipy metric names for the three reported measures
DISTANCE_MEASURES = {"cosine": "cosine", "l2": "euclidean", "l1": "cityblock"}


def _positional_accuracy(prototype_symbols: Sequence[str], candidate: str) -> float:
    """Match rate over the prototype symbols plus END"""
    expected = list(prototype_symbols) + [END_SYMBOL]
    produced = sequence_tokens(candidate.strip()) + [END_SYMBOL]
    hits = sum(1 for i, symbol in enumerate(expected) if i < len(produced) and produced[i] == symbol)
    return hits / len(expected)


def reconstruction_accuracy(
    prototype: EncodedSequence, candidate: str, vocabulary: Optional[Vocabulary] = None
) -> float:
    """Positionwise symbol accuracy over positions 1..true_length+1 (END counted, PAD not)"""
    if vocabulary is not None:
        symbols = [vocabulary.token(int(i)) for i in prototype.indices[1:prototype.true_length + 1]]
    else:
        symbols = sequence_tokens(prototype.smiles)
    return _positional_accuracy(symbols, candidate)


def _graph_key(s: str) -> str:
    key = normalize_or_none(s)
    return key if key is not None else s.strip()


def evaluate_run(run: GenerationRun) -> MetricsReport:
    """Fractions are over all k candidates; @k fields are counts"""
    prototype = run.prototype.strip()
    candidates = [c.strip() for c in run.candidates]
    k = len(candidates)
    if k == 0:
        return MetricsReport(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, k=0)

    prototype_symbols = sequence_tokens(prototype)
    prototype_key = _graph_key(prototype)
    validity: Dict[str, bool] = {}
    accuracy: Dict[str, float] = {}

    acc_total = 0.0
    valid = novel = novel_graph = exact = 0
    valid_unique = set()
    novel_unique = set()
    for c in candidates:
        if c not in validity:
            validity[c] = is_valid_smiles(c)
            accuracy[c] = _positional_accuracy(prototype_symbols, c)
        acc_total += accuracy[c]
        if c == prototype:
            exact += 1
        if not validity[c]:
            continue
        valid += 1
        valid_unique.add(c)
        if c != prototype:
            novel += 1
            novel_unique.add(c)
        if _graph_key(c) != prototype_key:
            novel_graph += 1

    return MetricsReport(
        acc=acc_total / k,
        valid=valid / k,
        novel=novel / k,
        acc_at_k=float(exact),
        valid_at_k=float(len(valid_unique)),
        novel_at_k=float(len(novel_unique)),
        novel_graph=novel_graph / k,
        k=k,
    )


def aggregate(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Macro average: every prototype weighs the same"""
    if not reports:
        return MetricsReport(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, k=0)
    table = np.array([list(r.as_dict().values()) for r in reports], dtype=np.float64)
    means = table.mean(axis=0)
    return MetricsReport(*(float(v) for v in means), k=reports[0].k)


def drug_hit_report(runs: Sequence[GenerationRun], fda_list: Sequence[str]) -> DrugHitReport:
    """Known drugs rediscovered from other prototypes, as count and percent of valid output"""
    if not fda_list:
        raise ValueError("drug list must not be empty")
    drug_keys = {_graph_key(s) for s in fda_list}

    hits: Dict[str, Tuple[str, str]] = {}
    valid_generated = 0
    for run in runs:
        prototype_key = _graph_key(run.prototype)
        for c in run.candidates:
            key = normalize_or_none(c)
            if key is None:
                continue
            valid_generated += 1
            if key in drug_keys and key != prototype_key and key not in hits:
                hits[key] = (run.prototype, key)

    percent = 100.0 * len(hits) / valid_generated if valid_generated else 0.0
    logger.info(f"💊 {len(hits)} known drugs among {valid_generated} valid candidates")
    return DrugHitReport(
        hits=len(hits), percent=percent, valid_generated=valid_generated, matches=tuple(hits.values())
    )


def _valid_unique(candidates: Iterable[str]) -> List[str]:
    seen = {}
    for c in candidates:
        c = c.strip()
        if c not in seen and is_valid_smiles(c):
            seen[c] = None
    return list(seen)


def levenshtein_histograms(run: GenerationRun) -> Tuple[DistanceHistogram, DistanceHistogram]:
    """Distances to the prototype and among candidates, valid unique candidates only"""
    prototype = run.prototype.strip()
    unique = _valid_unique(run.candidates)
    to_prototype = DistanceHistogram(PROTOTYPE_VS_GENERATED, [levenshtein(prototype, c) for c in unique])
    within = DistanceHistogram(WITHIN_POPULATION, [levenshtein(a, b) for a, b in combinations(unique, 2)])
    return to_prototype, within


def merge_histograms(histograms: Iterable[DistanceHistogram]) -> List[DistanceHistogram]:
    """Pool histograms of the same kind, keeping first-seen kind order"""
    pooled: Dict[str, DistanceHistogram] = {}
    for histogram in histograms:
        target = pooled.setdefault(histogram.kind, DistanceHistogram(histogram.kind))
        target.distances.extend(histogram.distances)
    return list(pooled.values())


def class_distance_ratios(embeddings: Mapping[str, np.ndarray]) -> ClassDistanceReport:
    """In-class mean pairwise distances divided by the pooled mean, per measure"""
    for name, vectors in embeddings.items():
        if len(vectors) < 2:
            raise ClassTooSmall(f"Class {name!r} has {len(vectors)} member(s); at least 2 are required")
    pooled = np.vstack([np.asarray(v, dtype=np.float64) for v in embeddings.values()])
    across = {key: float(pdist(pooled, metric).mean()) for key, metric in DISTANCE_MEASURES.items()}

    rows = []
    for name, vectors in embeddings.items():
        vectors = np.asarray(vectors, dtype=np.float64)
        ratios = {
            key: float(pdist(vectors, metric).mean()) / across[key] if across[key] > 0 else 0.0
            for key, metric in DISTANCE_MEASURES.items()
        }
        rows.append(ClassDistanceRow(name, ratios["cosine"], ratios["l2"], ratios["l1"], members=len(vectors)))
    rows.append(ClassDistanceRow(ACROSS_ROW, 1.0, 1.0, 1.0, members=len(pooled)))
    return ClassDistanceReport(rows)


def latent_class_distances(
    classes: Mapping[str, Sequence[str]], model: CDNModel, rng: Optional[np.random.Generator] = None
) -> ClassDistanceReport:
    """Class structure of latent draws taken at diversity 1"""
    rng = rng if rng is not None else np.random.default_rng(0)
    embeddings = {}
    for name, members in classes.items():
        if len(members) < 2:
            raise ClassTooSmall(f"Class {name!r} has {len(members)} member(s); at least 2 are required")
        g = model.encode_batch([model.encode_smiles(s) for s in members])
        embeddings[name] = diverse_sample(g, 1.0, rng)
    return class_distance_ratios(embeddings)


def generate_runs(
    model: CDNModel, prototypes: Sequence[str], cfg: DiversityConfig, workers: Optional[int] = None
) -> List[GenerationRun]:
    candidates = model.generate_many(prototypes, cfg, workers)
    return [GenerationRun(p, c, cfg) for p, c in zip(prototypes, candidates)]


def diversity_sweep(
    model: CDNModel,
    prototypes: Sequence[str],
    d_values: Sequence[float],
    modes: Sequence[str],
    k: int,
    seed: int = 0,
    workers: Optional[int] = None,
) -> List[SweepCell]:
    """Macro-averaged metrics for every (diversity, decoder mode) pair"""
    cells = []
    for diversity in d_values:
        for mode in modes:
            cfg = DiversityConfig(diversity=diversity, k=k, decoder_mode=mode, seed=seed)
            runs = generate_runs(model, prototypes, cfg, workers)
            report = aggregate([evaluate_run(run) for run in runs])
            logger.info(f"Sweep D={diversity} {mode}: {report.as_dict()}")
            cells.append(SweepCell(diversity, mode, k, report))
    return cells


def decoder_comparison(
    model: CDNModel,
    prototypes: Sequence[str],
    d_values: Sequence[float],
    k: int,
    seed: int = 0,
    workers: Optional[int] = None,
) -> List[SweepCell]:
    return diversity_sweep(model, prototypes, d_values, ("argmax", "sampling"), k, seed, workers)


def unconditional_validity(
    model: CDNModel, samples: int, mode: str = "argmax", seed: int = 0
) -> UnconditionalReport:
    """Decode prior draws and count how many parse and validate"""
    candidates = tuple(c.strip() for c in model.sample_prior(samples, np.random.default_rng(seed), mode))
    valid = sum(1 for c in candidates if is_valid_smiles(c))
    report = UnconditionalReport(mode, candidates, valid, len(_valid_unique(candidates)))
    logger.info(f"🎲 {valid}/{report.samples} prior samples valid ({report.unique_valid} unique)")
    return report
