from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from app.models.cdn import DiversityConfig

PROTOTYPE_VS_GENERATED = "prototype_vs_generated"
WITHIN_POPULATION = "within_population"

ACROSS_ROW = "Across Drugs"


@dataclass
class GenerationRun:
    prototype: str
    candidates: List[str]
    cfg: DiversityConfig

    def __post_init__(self):
        if len(self.candidates) != self.cfg.k:
            raise ValueError(f"run has {len(self.candidates)} candidates but k={self.cfg.k}")


@dataclass(frozen=True)
class MetricsReport:
    """Per-run metrics; fractions are over candidates, @k fields are counts"""

    acc: float
    valid: float
    novel: float
    acc_at_k: float  # candidates reproducing the prototype exactly
    valid_at_k: float  # unique valid strings
    novel_at_k: float  # unique novel strings
    novel_graph: float = 0.0  # novelty by normalized graph instead of string
    k: int = 0

    def as_dict(self) -> Dict[str, float]:
        return {
            "acc": self.acc,
            "valid": self.valid,
            "novel": self.novel,
            "acc_at_k": self.acc_at_k,
            "valid_at_k": self.valid_at_k,
            "novel_at_k": self.novel_at_k,
            "novel_graph": self.novel_graph,
        }


@dataclass
class DistanceHistogram:
    kind: str
    distances: List[int] = field(default_factory=list)

    @property
    def summary(self) -> Tuple[float, float]:
        if not self.distances:
            return 0.0, 0.0
        values = np.asarray(self.distances, dtype=np.float64)
        return float(values.mean()), float(values.std())

    def counts(self) -> Dict[int, int]:
        counts: Dict[int, int] = {}
        for d in self.distances:
            counts[d] = counts.get(d, 0) + 1
        return dict(sorted(counts.items()))


@dataclass(frozen=True)
class ClassDistanceRow:
    name: str
    cosine: float
    l2: float
    l1: float
    members: int = 0


@dataclass
class ClassDistanceReport:
    rows: List[ClassDistanceRow]

    def row(self, name: str) -> ClassDistanceRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)


@dataclass(frozen=True)
class DrugHitReport:
    hits: int
    percent: float  # of valid generated molecules
    valid_generated: int
    matches: Tuple[Tuple[str, str], ...] = ()  # (prototype, normalized hit)


@dataclass(frozen=True)
class SweepCell:
    diversity: float
    mode: str
    k: int
    report: MetricsReport


@dataclass(frozen=True)
class UnconditionalReport:
    """Validity of strings decoded straight from the prior"""

    mode: str
    candidates: Tuple[str, ...]
    valid: int
    unique_valid: int

    @property
    def samples(self) -> int:
        return len(self.candidates)

    @property
    def valid_fraction(self) -> float:
        return self.valid / self.samples if self.candidates else 0.0
