import argparse
import logging
from pathlib import Path
from typing import List

import numpy as np

from app.cli.common import (
    UsageError,
    build_diversity_config,
    load_model,
    output_dir,
    parse_float_list,
    run_stage,
    usage_failure,
)
from app.cli.generate import add_generation_flags
from app.core.config import settings
from app.models.evaluation import PROTOTYPE_VS_GENERATED, WITHIN_POPULATION
from app.services.data_pipeline import load_classes, load_smiles_list
from app.services.evaluation import (
    aggregate,
    diversity_sweep,
    drug_hit_report,
    evaluate_run,
    generate_runs,
    latent_class_distances,
    levenshtein_histograms,
    merge_histograms,
)
from app.utils.reports import (
    distance_summary_rows,
    write_candidates,
    write_class_report,
    write_distance_summary,
    write_drug_hits,
    write_histograms,
    write_metrics,
    write_sweep,
)

logger = logging.getLogger(__name__)

DECODER_MODES = ("argmax", "sampling")

# Recorded in every evaluation manifest
METRIC_CONVENTIONS = {
    "averaging": "macro (per-prototype mean)",
    "acc": "positionwise symbols 1..true_length+1, END counted, PAD excluded",
    "at_k": "acc_at_k exact reconstructions, valid_at_k unique valid, novel_at_k unique novel",
}


def _prototypes_default(args: argparse.Namespace) -> str:
    """Held-out test molecules written next to the checkpoint by train"""
    if args.prototypes:
        return args.prototypes
    return str(Path(args.checkpoint).parent / "test.smi")


def _label(diversity: float) -> str:
    return f"{diversity:g}"


def _parse_modes(text: str) -> List[str]:
    modes = [part.strip() for part in text.split(",") if part.strip()]
    unknown = [m for m in modes if m not in DECODER_MODES]
    if not modes or unknown:
        raise UsageError(f"--modes must list decoder modes from {DECODER_MODES}, got {text!r}")
    return modes


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("eval", help="Evaluation reports")
    commands = parser.add_subparsers(dest="eval_command", required=True)

    recon = commands.add_parser("recon", help="Accuracy, validity and novelty on held-out prototypes")
    recon.add_argument("--prototypes", help="Defaults to test.smi beside the checkpoint")
    add_generation_flags(recon)

    drugs = commands.add_parser("drugs", help="Known drugs rediscovered from other prototypes")
    drugs.add_argument("--prototypes", required=True)
    drugs.add_argument("--fda", required=True, help="Known-drug SMILES, one per line")
    add_generation_flags(drugs, diversity=3.0)

    for name, text in (
        ("sweep", "Metrics over diversity values and decoder modes"),
        ("distances", "Levenshtein histograms per diversity value"),
    ):
        sub = commands.add_parser(name, help=text)
        sub.add_argument("--checkpoint", required=True)
        sub.add_argument("--prototypes", help="Defaults to test.smi beside the checkpoint")
        sub.add_argument("--diversities", default="1,2,3")
        sub.add_argument("--modes", default="argmax")
        sub.add_argument("--samples", type=int, default=settings.DEFAULT_SAMPLES)
        sub.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
        sub.add_argument("--workers", type=int, default=settings.WORKERS)
        sub.add_argument("--out", help="Output directory")
    parser.set_defaults(handler=cmd_eval)
    return parser


def add_latent_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("analyze-latent", help="In-class versus pooled latent distances")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--classes", required=True, help="name<TAB>SMILES per line")
    parser.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    parser.add_argument("--out", help="Output directory")
    parser.set_defaults(handler=cmd_analyze_latent)
    return parser


def cmd_eval_recon(args: argparse.Namespace) -> int:
    try:
        cfg = build_diversity_config(args.diversity, args.samples, args.decoder, args.seed)
    except UsageError as e:
        return usage_failure(e)
    out = output_dir(args.out, "eval_recon")
    prototypes_path = _prototypes_default(args)

    def action():
        model = load_model(args.checkpoint)
        runs = generate_runs(model, load_smiles_list(prototypes_path), cfg, args.workers)
        write_candidates(runs, out / "candidates.tsv")
        report = aggregate([evaluate_run(run) for run in runs])
        write_metrics(report, out / "recon.csv", cfg.diversity, cfg.decoder_mode, cfg.k)

    config = {**cfg.model_dump(), "metrics": METRIC_CONVENTIONS}
    inputs = {"checkpoint": args.checkpoint, "prototypes": prototypes_path}
    return run_stage(out, "eval recon", args.argv, config, cfg.seed, inputs, action)


def cmd_eval_drugs(args: argparse.Namespace) -> int:
    try:
        cfg = build_diversity_config(args.diversity, args.samples, args.decoder, args.seed)
    except UsageError as e:
        return usage_failure(e)
    out = output_dir(args.out, "eval_drugs")

    def action():
        model = load_model(args.checkpoint)
        runs = generate_runs(model, load_smiles_list(args.prototypes), cfg, args.workers)
        write_candidates(runs, out / "candidates.tsv")
        write_drug_hits(drug_hit_report(runs, load_smiles_list(args.fda)), out / "drug_hits.csv")

    inputs = {"checkpoint": args.checkpoint, "prototypes": args.prototypes, "fda": args.fda}
    return run_stage(out, "eval drugs", args.argv, cfg.model_dump(), cfg.seed, inputs, action)


def _sweep_settings(args: argparse.Namespace):
    d_values = parse_float_list(args.diversities)
    modes = _parse_modes(args.modes)
    for d in d_values:
        build_diversity_config(d, args.samples, modes[0], args.seed)
    return d_values, modes


def cmd_eval_sweep(args: argparse.Namespace) -> int:
    try:
        d_values, modes = _sweep_settings(args)
    except UsageError as e:
        return usage_failure(e)
    out = output_dir(args.out, "eval_sweep")
    prototypes_path = _prototypes_default(args)

    def action():
        model = load_model(args.checkpoint)
        cells = diversity_sweep(
            model, load_smiles_list(prototypes_path), d_values, modes, args.samples, args.seed, args.workers
        )
        write_sweep(cells, out / "sweep.csv")

    config = {"diversities": d_values, "modes": modes, "k": args.samples, "metrics": METRIC_CONVENTIONS}
    inputs = {"checkpoint": args.checkpoint, "prototypes": prototypes_path}
    return run_stage(out, "eval sweep", args.argv, config, args.seed, inputs, action)


def cmd_eval_distances(args: argparse.Namespace) -> int:
    """Two pooled histogram CSVs per diversity value and decoder mode, plus one summary CSV"""
    try:
        d_values, modes = _sweep_settings(args)
    except UsageError as e:
        return usage_failure(e)
    out = output_dir(args.out, "eval_distances")
    prototypes_path = _prototypes_default(args)

    def action():
        model = load_model(args.checkpoint)
        prototypes = load_smiles_list(prototypes_path)
        summary = []
        for mode in modes:
            for d in d_values:
                cfg = build_diversity_config(d, args.samples, mode, args.seed)
                histograms = []
                for run in generate_runs(model, prototypes, cfg, args.workers):
                    histograms.extend(levenshtein_histograms(run))
                pooled = {h.kind: h for h in merge_histograms(histograms)}
                summary.extend(distance_summary_rows(pooled.values(), d, mode))
                suffix = f"D{_label(d)}" if len(modes) == 1 else f"{mode}_D{_label(d)}"
                for kind in (PROTOTYPE_VS_GENERATED, WITHIN_POPULATION):
                    if kind in pooled:
                        mean, std = pooled[kind].summary
                        logger.info(f"D={_label(d)} {mode} {kind}: mean {mean:.3f}, std {std:.3f}")
                        write_histograms([pooled[kind]], out / f"{kind}_{suffix}.csv")
                    else:
                        write_histograms([], out / f"{kind}_{suffix}.csv")
        write_distance_summary(summary, out / "distance_summary.csv")

    config = {"diversities": d_values, "modes": modes, "k": args.samples}
    inputs = {"checkpoint": args.checkpoint, "prototypes": prototypes_path}
    return run_stage(out, "eval distances", args.argv, config, args.seed, inputs, action)


def cmd_analyze_latent(args: argparse.Namespace) -> int:
    out = output_dir(args.out, "analyze_latent")

    def action():
        model = load_model(args.checkpoint)
        classes = load_classes(args.classes)
        report = latent_class_distances(classes, model, np.random.default_rng(args.seed))
        write_class_report(report, out / "class_distances.csv")

    config = {"diversity": 1.0, "normalization": "ratio to pooled mean pairwise distance"}
    inputs = {"checkpoint": args.checkpoint, "classes": args.classes}
    return run_stage(out, "analyze-latent", args.argv, config, args.seed, inputs, action)


EVAL_COMMANDS = {
    "recon": cmd_eval_recon,
    "drugs": cmd_eval_drugs,
    "sweep": cmd_eval_sweep,
    "distances": cmd_eval_distances,
}


def cmd_eval(args: argparse.Namespace) -> int:
    return EVAL_COMMANDS[args.eval_command](args)
