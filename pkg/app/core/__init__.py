"""
Core application components

This package contains the fundamental components of the toolkit:
- Configuration management
- Checkpoint persistence
"""

from .config import settings
from .checkpoint import load_checkpoint, save_checkpoint

# Export commonly used components
__all__ = [
    # Configuration
    "settings",

    # Persistence
    "load_checkpoint",
    "save_checkpoint",
]

# Core package info
CORE_INFO = {
    "components": [
        "Configuration Management",
        "Checkpoint Files",
    ],
    "checkpoint_format": "CDN1 magic, length-prefixed JSON header, little-endian float32 blocks",
}
