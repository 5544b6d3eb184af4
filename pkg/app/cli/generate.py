import argparse
import logging
from pathlib import Path
from typing import Optional

from app.cli.common import (
    UsageError,
    build_diversity_config,
    load_model,
    load_prototypes,
    output_dir,
    run_stage,
    usage_failure,
)
from app.core.config import settings
from app.services.evaluation import aggregate, evaluate_run, generate_runs, unconditional_validity
from app.utils.reports import write_candidates, write_metrics, write_unconditional

logger = logging.getLogger(__name__)


def add_generation_flags(parser: argparse.ArgumentParser, diversity: Optional[float] = None) -> None:
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument(
        "--diversity", type=float, default=settings.DEFAULT_DIVERSITY if diversity is None else diversity
    )
    parser.add_argument("--samples", type=int, default=settings.DEFAULT_SAMPLES, help="Candidates per prototype (k)")
    parser.add_argument("--decoder", choices=["argmax", "sampling"], default=settings.DEFAULT_DECODER)
    parser.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    parser.add_argument("--workers", type=int, default=settings.WORKERS)
    parser.add_argument("--out", help="Output directory")


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("generate", help="Generate candidates around prototypes")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--prototype", help="A single prototype SMILES")
    source.add_argument("--prototypes", help="File with one prototype SMILES per line")
    source.add_argument(
        "--unconditional", type=int, metavar="N", help="Decode N draws from the prior instead of prototypes"
    )
    add_generation_flags(parser)
    parser.set_defaults(handler=cmd_generate)
    return parser


def cmd_generate(args: argparse.Namespace) -> int:
    try:
        cfg = build_diversity_config(args.diversity, args.samples, args.decoder, args.seed)
        if args.unconditional is not None and args.unconditional <= 0:
            raise UsageError(f"--unconditional must be a positive count, got {args.unconditional}")
    except UsageError as e:
        return usage_failure(e)
    out = output_dir(args.out, "generate")

    if args.unconditional is not None:
        return _generate_unconditional(args, cfg.decoder_mode, out)

    def action():
        model = load_model(args.checkpoint)
        prototypes = load_prototypes(args.prototype, args.prototypes)
        runs = generate_runs(model, prototypes, cfg, args.workers)
        write_candidates(runs, out / "candidates.tsv")
        report = aggregate([evaluate_run(run) for run in runs])
        write_metrics(report, out / "summary.csv", cfg.diversity, cfg.decoder_mode, cfg.k)

    return run_stage(
        out,
        "generate",
        args.argv,
        cfg.model_dump(),
        cfg.seed,
        {"checkpoint": args.checkpoint, "prototypes": args.prototypes},
        action,
    )


def _generate_unconditional(args: argparse.Namespace, mode: str, out: Path) -> int:
    def action():
        model = load_model(args.checkpoint)
        report = unconditional_validity(model, args.unconditional, mode, args.seed)
        write_unconditional(report, out / "unconditional.tsv")

    config = {"unconditional": args.unconditional, "decoder_mode": mode}
    return run_stage(out, "generate", args.argv, config, args.seed, {"checkpoint": args.checkpoint}, action)
