"""
Report and manifest writers

All tables go through pandas with the configured fixed float format so
reruns produce byte-identical files.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import pandas as pd

from app.core.config import settings
from app.models.cdn import EpochRecord
from app.models.evaluation import (
    ClassDistanceReport,
    DistanceHistogram,
    DrugHitReport,
    GenerationRun,
    MetricsReport,
    SweepCell,
    UnconditionalReport,
)
from app.services.smiles import is_valid_smiles

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SWEEP_COLUMNS = ["metric", "D", "mode", "k", "value"]
HISTOGRAM_COLUMNS = ["kind", "distance", "count"]
CLASS_COLUMNS = ["class", "cosine", "l2", "l1", "members"]
DRUG_COLUMNS = ["hits", "percent", "valid_generated"]
DISTANCE_SUMMARY_COLUMNS = ["kind", "D", "mode", "mean", "std", "n"]
UNCONDITIONAL_COLUMNS = ["mode", "samples", "valid", "unique_valid", "valid_fraction"]


def file_digest(path: PathLike) -> str:
    """SHA-256 of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_frame(frame: pd.DataFrame, path: PathLike, sep: str = ",", header: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, sep=sep, index=False, header=header, float_format=settings.FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"📝 Wrote {path}")
    return path


def metrics_rows(report: MetricsReport, diversity: float, mode: str, k: int) -> List[dict]:
    return [
        {"metric": metric, "D": diversity, "mode": mode, "k": k, "value": value}
        for metric, value in report.as_dict().items()
    ]


def write_metrics(report: MetricsReport, path: PathLike, diversity: float, mode: str, k: int) -> Path:
    return _write_frame(pd.DataFrame(metrics_rows(report, diversity, mode, k), columns=SWEEP_COLUMNS), path)


def write_sweep(cells: Sequence[SweepCell], path: PathLike) -> Path:
    rows = []
    for cell in cells:
        rows.extend(metrics_rows(cell.report, cell.diversity, cell.mode, cell.k))
    return _write_frame(pd.DataFrame(rows, columns=SWEEP_COLUMNS), path)


def write_histograms(histograms: Iterable[DistanceHistogram], path: PathLike) -> Path:
    rows = [
        {"kind": histogram.kind, "distance": distance, "count": count}
        for histogram in histograms
        for distance, count in histogram.counts().items()
    ]
    return _write_frame(pd.DataFrame(rows, columns=HISTOGRAM_COLUMNS), path)


def distance_summary_rows(histograms: Iterable[DistanceHistogram], diversity: float, mode: str) -> List[dict]:
    rows = []
    for histogram in histograms:
        mean, std = histogram.summary
        rows.append(
            {"kind": histogram.kind, "D": diversity, "mode": mode, "mean": mean, "std": std, "n": len(histogram.distances)}
        )
    return rows


def write_distance_summary(rows: Sequence[dict], path: PathLike) -> Path:
    """One line per (kind, D, mode): mean, std and count of the pooled distances"""
    return _write_frame(pd.DataFrame(list(rows), columns=DISTANCE_SUMMARY_COLUMNS), path)


def write_candidates(runs: Sequence[GenerationRun], path: PathLike) -> Path:
    """prototype<TAB>candidate<TAB>valid (1/0), one line per candidate"""
    rows = [
        {"prototype": run.prototype, "candidate": c, "valid": int(is_valid_smiles(c))}
        for run in runs
        for c in run.candidates
    ]
    frame = pd.DataFrame(rows, columns=["prototype", "candidate", "valid"])
    return _write_frame(frame, path, sep="\t", header=False)


def write_class_report(report: ClassDistanceReport, path: PathLike) -> Path:
    rows = [
        {"class": row.name, "cosine": row.cosine, "l2": row.l2, "l1": row.l1, "members": row.members}
        for row in report.rows
    ]
    return _write_frame(pd.DataFrame(rows, columns=CLASS_COLUMNS), path)


def write_drug_hits(report: DrugHitReport, path: PathLike) -> Path:
    frame = pd.DataFrame(
        [{"hits": report.hits, "percent": report.percent, "valid_generated": report.valid_generated}],
        columns=DRUG_COLUMNS,
    )
    _write_frame(frame, path)
    if report.matches:
        matches = pd.DataFrame(list(report.matches), columns=["prototype", "drug"])
        _write_frame(matches, Path(path).with_suffix(".matches.tsv"), sep="\t")
    return Path(path)


def write_loss_curve(history: Sequence[EpochRecord], path: PathLike) -> Path:
    return _write_frame(pd.DataFrame([vars(record) for record in history]), path)


def write_smiles(smiles: Iterable[str], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{s}\n" for s in smiles), encoding="utf-8")
    return path


def write_manifest(
    path: PathLike,
    command: str,
    argv: Sequence[str],
    config: dict,
    seed: int,
    inputs: Optional[dict] = None,
    status: str = "ok",
    error: Optional[str] = None,
) -> Path:
    """Record what a run resolved: config, seed, argv and digests of its inputs"""
    digests = {}
    for label, input_path in (inputs or {}).items():
        if input_path is not None and Path(input_path).exists():
            digests[label] = {"path": str(input_path), "sha256": file_digest(input_path)}
    manifest = {
        "app": settings.APP_NAME,
        "version": settings.APP_VERSION,
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "inputs": digests,
        "status": status,
    }
    if error is not None:
        manifest["error"] = error
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def write_unconditional(report: UnconditionalReport, path: PathLike) -> Path:
    """candidate<TAB>valid (1/0) beside a one-line summary CSV"""
    rows = [{"candidate": c, "valid": int(is_valid_smiles(c))} for c in report.candidates]
    _write_frame(pd.DataFrame(rows, columns=["candidate", "valid"]), path, sep="\t", header=False)
    summary = pd.DataFrame(
        [
            {
                "mode": report.mode,
                "samples": report.samples,
                "valid": report.valid,
                "unique_valid": report.unique_valid,
                "valid_fraction": report.valid_fraction,
            }
        ],
        columns=UNCONDITIONAL_COLUMNS,
    )
    _write_frame(summary, Path(path).with_suffix(".csv"))
    return Path(path)
