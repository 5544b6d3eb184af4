"""
Shared plumbing for the command handlers: config overrides, checkpoint
loading and the run wrapper that maps errors to exit codes and always
leaves a manifest behind.
"""

import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from pydantic import ValidationError

from app.core.checkpoint import load_checkpoint
from app.core.config import settings
from app.models.cdn import DiversityConfig, ModelConfig
from app.services.cdn_model import CDNModel
from app.services.data_pipeline import load_smiles_list
from app.utils.exceptions import CDNError
from app.utils.reports import write_manifest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

MANIFEST_NAME = "manifest.json"


class UsageError(Exception):
    """Bad flag values detected after argparse (exit code 2)"""


def parse_overrides(pairs: Optional[Sequence[str]]) -> Dict[str, str]:
    """--config key=value pairs, restricted to ModelConfig fields"""
    overrides: Dict[str, str] = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        key = key.strip()
        if not sep or not key:
            raise UsageError(f"--config expects key=value, got {pair!r}")
        if key not in ModelConfig.model_fields:
            raise UsageError(f"Unknown config key {key!r}")
        overrides[key] = value.strip()
    return overrides


def build_model_config(pairs: Optional[Sequence[str]], seed: Optional[int] = None) -> ModelConfig:
    values = parse_overrides(pairs)
    if seed is not None:
        values["seed"] = seed
    try:
        return ModelConfig(**values)
    except ValidationError as e:
        raise UsageError(f"Invalid model config: {e}")


def build_diversity_config(diversity: float, k: int, mode: str, seed: int) -> DiversityConfig:
    try:
        return DiversityConfig(diversity=diversity, k=k, decoder_mode=mode, seed=seed)
    except ValidationError as e:
        raise UsageError(f"Invalid generation settings: {e}")


def parse_float_list(text: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"Expected a comma-separated list of numbers, got {text!r}")
    if not values:
        raise UsageError("Expected at least one value")
    return values


def output_dir(path: Optional[str], command: str) -> Path:
    out = Path(path) if path else Path(settings.OUTPUT_DIR) / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_model(path: str) -> CDNModel:
    return CDNModel.from_checkpoint(load_checkpoint(path))


def load_prototypes(single: Optional[str], path: Optional[str]) -> List[str]:
    if single:
        return [single.strip()]
    return load_smiles_list(path)


def usage_failure(error: Exception) -> int:
    print(f"error: {error}", file=sys.stderr)
    return EXIT_USAGE


def run_stage(
    out: Path,
    command: str,
    argv: Sequence[str],
    config: dict,
    seed: int,
    inputs: Dict[str, Optional[str]],
    action: Callable[[], None],
) -> int:
    """Run a command body, map failures to exit codes and write the manifest either way"""
    status, error = "ok", None
    logger.info(f"🚀 Running {command} (seed {seed}) -> {out}")
    try:
        action()
        logger.info(f"✅ {command} finished")
        return EXIT_OK
    except (CDNError, FileNotFoundError, ValueError) as e:
        status, error = "failed", str(e)
        logger.error(f"❌ {command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    finally:
        write_manifest(out / MANIFEST_NAME, command, argv, config, seed, inputs, status, error)
