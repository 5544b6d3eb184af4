"""
Command-line handlers

One module per command family:
- train: fit a model on a corpus
- generate: candidates around prototypes
- evaluate: eval recon/drugs/sweep/distances and analyze-latent
"""

from . import evaluate, generate, train

__all__ = ["train", "generate", "evaluate", "COMMAND_REGISTRY", "register_commands"]

# Command registry: subcommand -> parser builder and description
COMMAND_REGISTRY = {
    "train": {
        "add_parser": train.add_parser,
        "handler": train.cmd_train,
        "description": "Train and write checkpoint, loss curve, held-out splits and manifest",
    },
    "generate": {
        "add_parser": generate.add_parser,
        "handler": generate.cmd_generate,
        "description": "Generate k candidates per prototype with diversity D",
    },
    "eval": {
        "add_parser": evaluate.add_parser,
        "handler": evaluate.cmd_eval,
        "description": "recon, drugs, sweep and distances reports",
    },
    "analyze-latent": {
        "add_parser": evaluate.add_latent_parser,
        "handler": evaluate.cmd_analyze_latent,
        "description": "In-class versus pooled latent distance ratios",
    },
}


def register_commands(subparsers) -> None:
    for entry in COMMAND_REGISTRY.values():
        entry["add_parser"](subparsers)
