"""
Services

This package contains the computational engines of the toolkit:
- smiles: tokenizer, parser, validity checks, normalization, edit distance
- autodiff: tensors, tape, differentiable ops, Adam, gradient checks
- data_pipeline: corpus loading, vocabulary, encoding, splits
- cdn_model: the network, its trainer and generation
- evaluation: metrics, drug hits, histograms, latent distances, sweeps
"""

from . import autodiff, smiles, data_pipeline, cdn_model, evaluation

__all__ = ["autodiff", "smiles", "data_pipeline", "cdn_model", "evaluation"]

# Service registry
SERVICE_REGISTRY = {
    "smiles": smiles,
    "autodiff": autodiff,
    "data_pipeline": data_pipeline,
    "cdn_model": cdn_model,
    "evaluation": evaluation,
}
