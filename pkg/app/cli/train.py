import argparse
import logging

from app.cli.common import UsageError, build_model_config, output_dir, run_stage, usage_failure
from app.core.checkpoint import save_checkpoint
from app.services.cdn_model import train
from app.services.data_pipeline import load_corpus, load_smiles_list, split
from app.utils.reports import write_loss_curve, write_smiles

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.cdn"
LOSS_CURVE_NAME = "loss_curve.csv"


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("train", help="Train a model on a SMILES corpus")
    parser.add_argument("--corpus", required=True, help="One SMILES per line")
    parser.add_argument("--config", action="append", metavar="KEY=VALUE", help="Model config override (repeatable)")
    parser.add_argument("--exclude", help="SMILES to keep out of every split (e.g. known drugs)")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--seed", type=int, help="Overrides the config seed")
    parser.add_argument("--validation-size", type=int, help="Held-out validation set size")
    parser.add_argument("--test-size", type=int, help="Held-out test set size")
    parser.set_defaults(handler=cmd_train)
    return parser


def cmd_train(args: argparse.Namespace) -> int:
    """Train, then write checkpoint, loss curve, held-out SMILES and manifest"""
    try:
        cfg = build_model_config(args.config, args.seed)
    except UsageError as e:
        return usage_failure(e)
    out = output_dir(args.out, "train")

    def action():
        corpus = load_corpus(args.corpus, cfg.max_len)
        exclusion = load_smiles_list(args.exclude) if args.exclude else ()
        corpus_split = split(
            corpus,
            cfg.seed,
            exclusion,
            max_len=cfg.max_len,
            validation_size=args.validation_size,
            test_size=args.test_size,
        )
        write_smiles((seq.smiles for seq in corpus_split.validation), out / "validation.smi")
        write_smiles((seq.smiles for seq in corpus_split.test), out / "test.smi")
        checkpoint = train(corpus_split, cfg)
        save_checkpoint(checkpoint, out / CHECKPOINT_NAME)
        write_loss_curve(checkpoint.history, out / LOSS_CURVE_NAME)

    return run_stage(
        out,
        "train",
        args.argv,
        cfg.model_dump(),
        cfg.seed,
        {"corpus": args.corpus, "exclude": args.exclude},
        action,
    )
