import logging
from pathlib import Path
from typing import Optional

import click

from prosoref.common.constants import F0_SUFFIX, WAV_SUFFIX
from prosoref.common.utils import gather_ordered
from prosoref.core.config import get_settings
from prosoref.core.dependencies import existing_dir, frame_options, frame_spec, output_file
from prosoref.core.exceptions import FileNotFound, ProsorefError
from prosoref.modules.features.service import FeatureService
from prosoref.schemas.evaluation import EvalReport

from .service import EvaluationService

logger = logging.getLogger("prosoref.evaluation")


def utterance_ids(directory: Path) -> list[str]:
    """Ids with a track pair or a WAV file, sorted."""
    ids = {p.name[: -len(F0_SUFFIX)] for p in directory.glob(f"*{F0_SUFFIX}")}
    ids |= {p.stem for p in directory.glob(f"*{WAV_SUFFIX}")}
    return sorted(ids)


def _audio(directory: Path, utterance: str) -> Optional[Path]:
    path = directory / f"{utterance}{WAV_SUFFIX}"
    return path if path.is_file() else None


@click.group()
def evaluation():
    """Objective F0 evaluation"""


@evaluation.command()
@click.option("--ref-dir", type=existing_dir, required=True)
@click.option("--syn-dir", type=existing_dir, required=True)
@click.option("--out", type=output_file, required=True)
@click.option("--table", type=output_file, default=None, help="Also write an aligned text table")
@click.option("--system", default=None, help="Model label for the table")
@click.option("--condition", default=None, help="Reference label for the table, e.g. SS or US")
@frame_options
def evaluate(
    ref_dir: Path,
    syn_dir: Path,
    out: Path,
    table: Optional[Path],
    system: Optional[str],
    condition: Optional[str],
    window_ms: float,
    hop_ms: float,
):
    """DTW on cepstra, F0 RMSE / correlation / FFE per utterance"""
    spec = frame_spec(window_ms, hop_ms)
    ids = utterance_ids(ref_dir)
    syn_ids = set(utterance_ids(syn_dir))
    missing = [str(syn_dir / u) for u in ids if u not in syn_ids]
    if missing:
        raise FileNotFound(
            f"{len(missing)} utterance(s) have no synthesized counterpart", missing=missing
        )

    def run_one(utterance: str) -> EvalReport:
        try:
            ref = FeatureService.load_tracks(utterance, _audio(ref_dir, utterance), ref_dir, spec)
            syn = FeatureService.load_tracks(utterance, _audio(syn_dir, utterance), syn_dir, spec)
            report = EvaluationService.evaluate_utterance(ref[0], ref[1], syn[0], syn[1])
        except ProsorefError as e:
            raise e.with_context(utterance=utterance)
        if report.undefined:
            logger.warning("%s: %s", utterance, report.undefined)
        return report

    reports = dict(zip(ids, gather_ordered(run_one, ids, get_settings().workers)))
    summary = EvaluationService.evaluate_corpus(reports, system=system, condition=condition)
    EvaluationService.write_summary(summary, out)
    if table is not None:
        EvaluationService.write_table(EvaluationService.render_table([summary]), table)

    logger.info(
        "evaluated %d utterances (%d with undefined metrics): RMSE %s Hz, CORR %s, FFE %.2f%%",
        summary.n_utterances,
        len(summary.undefined),
        summary.rmse_hz.render(1) if summary.rmse_hz else "-",
        summary.corr.render(2) if summary.corr else "-",
        summary.ffe_pct.mean,
    )
