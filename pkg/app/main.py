import argparse
import json
import logging
import sys
from typing import List, Optional

from app import APP_INFO
from app.cli import COMMAND_REGISTRY, register_commands
from app.cli.common import EXIT_FAILURE, EXIT_OK, EXIT_USAGE
from app.core import CORE_INFO
from app.core.config import settings
from app.models import MODEL_CATEGORIES, MODEL_REGISTRY
from app.services import SERVICE_REGISTRY
from app.utils import UTILITY_CATEGORIES

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)
logger = logging.getLogger(__name__)


def app_info() -> dict:
    """Package, command and registry summary printed by --info"""
    return {
        **APP_INFO,
        "commands": {name: entry["description"] for name, entry in COMMAND_REGISTRY.items()},
        "core": CORE_INFO,
        "models": sorted(MODEL_REGISTRY),
        "model_categories": {
            category: [model.__name__ for model in models] for category, models in MODEL_CATEGORIES.items()
        },
        "services": sorted(SERVICE_REGISTRY),
        "utilities": UTILITY_CATEGORIES,
        "settings": {"float_format": settings.FLOAT_FORMAT, "workers": settings.WORKERS},
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdn",
        description=f"{settings.APP_NAME} {settings.APP_VERSION}: prototype-conditioned molecule generation",
    )
    parser.add_argument("--info", action="store_true", help="Print package and command information as JSON")
    subparsers = parser.add_subparsers(dest="command")
    register_commands(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.info and args.command is None:
            parser.error("a command is required")
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    args.argv = argv

    if args.info:
        print(json.dumps(app_info(), indent=2, sort_keys=True))
        return EXIT_OK

    try:
        return args.handler(args)
    except Exception as e:
        # Anything the handlers did not map themselves
        logger.error(f"Unhandled error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
