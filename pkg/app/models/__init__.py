"""
Domain Models

This package contains the data types shared across the toolkit:
- Molecular graph and validity types
- Vocabulary and encoded sequence types
- Model configuration, latent and checkpoint types
- Evaluation report types
"""

from .molecule import Atom, Bond, MolGraph, Token, ValidityReport, Violation
from .sequence import CorpusSplit, EncodedSequence, Vocabulary
from .cdn import (
    Checkpoint,
    DiversityConfig,
    EpochRecord,
    LatentGaussian,
    LossBreakdown,
    ModelConfig,
    TrainingMetadata,
)
from .evaluation import (
    ClassDistanceReport,
    ClassDistanceRow,
    DistanceHistogram,
    DrugHitReport,
    GenerationRun,
    MetricsReport,
    SweepCell,
    UnconditionalReport,
)

# Export all models
__all__ = [
    # Molecules
    "Atom",
    "Bond",
    "MolGraph",
    "Token",
    "ValidityReport",
    "Violation",

    # Sequences
    "CorpusSplit",
    "EncodedSequence",
    "Vocabulary",

    # Network
    "Checkpoint",
    "DiversityConfig",
    "EpochRecord",
    "LatentGaussian",
    "LossBreakdown",
    "ModelConfig",
    "TrainingMetadata",

    # Evaluation
    "ClassDistanceReport",
    "ClassDistanceRow",
    "DistanceHistogram",
    "DrugHitReport",
    "GenerationRun",
    "MetricsReport",
    "SweepCell",
    "UnconditionalReport",
]

# Model registry for easy access
MODEL_REGISTRY = {
    "mol_graph": MolGraph,
    "validity_report": ValidityReport,
    "vocabulary": Vocabulary,
    "encoded_sequence": EncodedSequence,
    "corpus_split": CorpusSplit,
    "model_config": ModelConfig,
    "diversity_config": DiversityConfig,
    "latent_gaussian": LatentGaussian,
    "loss_breakdown": LossBreakdown,
    "checkpoint": Checkpoint,
    "generation_run": GenerationRun,
    "metrics_report": MetricsReport,
    "distance_histogram": DistanceHistogram,
    "class_distance_report": ClassDistanceReport,
    "drug_hit_report": DrugHitReport,
    "unconditional_report": UnconditionalReport,
}

# Model categories
MODEL_CATEGORIES = {
    "chemistry": [MolGraph, ValidityReport],
    "data": [Vocabulary, EncodedSequence, CorpusSplit],
    "network": [ModelConfig, DiversityConfig, LatentGaussian, LossBreakdown, Checkpoint],
    "evaluation": [GenerationRun, MetricsReport, DistanceHistogram, ClassDistanceReport, DrugHitReport,
                   UnconditionalReport],
}
