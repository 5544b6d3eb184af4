"""
Utility Functions

This package contains helpers used throughout the toolkit:
- exceptions: the CDNError hierarchy
- reports: CSV/TSV writers, manifests and file digests
"""

__all__ = [
    "exceptions",
    "reports",
]

# Utility categories
UTILITY_CATEGORIES = {
    "errors": [
        "SMILES errors with character positions",
        "Tensor shape and index errors",
        "Data, model and evaluation errors"
    ],
    "reports": [
        "Fixed-format CSV tables",
        "Candidate TSV files",
        "Run manifests",
        "SHA-256 content digests"
    ]
}
