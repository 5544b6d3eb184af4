"""
CDN Toolkit
Prototype-conditioned molecule generation with tunable diversity

This package trains a conditional diversity network on SMILES corpora,
generates candidate molecules around prototype molecules and evaluates
them for validity, novelty and diversity.
"""

__version__ = "1.0.0"
__author__ = "CDN Toolkit Team"
__description__ = "Conditional diversity network toolkit for molecule generation"

# Package metadata
__all__ = [
    "__version__",
    "__author__",
    "__description__",
]

# Application info
APP_INFO = {
    "name": "CDN Toolkit",
    "version": __version__,
    "description": __description__,
    "author": __author__,
    "commands": ["train", "generate", "eval", "analyze-latent"],
    "decoder_modes": ["argmax", "sampling"],
    "features": [
        "SMILES parsing, validation and normalization",
        "Tape-based automatic differentiation",
        "Convolutional encoder with LSTM decoder",
        "Diversity-scaled latent sampling",
        "Unconditional sampling from the prior",
        "Validity, novelty and drug-hit evaluation",
        "Latent class distance analysis"
    ]
}
