import logging
from pathlib import Path
from typing import Optional

import click

from prosoref.common.constants import WILCOXON_EXACT_MAX_N
from prosoref.core.dependencies import existing_file, output_file

from .service import ListeningService

logger = logging.getLogger("prosoref.listening")


@click.group()
def listening():
    """Listening test statistics"""


@listening.command("mushra-stats")
@click.option(
    "--scores",
    type=existing_file,
    required=True,
    help="CSV: listener,utterance,system,score[,condition]",
)
@click.option("--out", type=output_file, required=True)
@click.option(
    "--quartiles", type=output_file, default=None, help="Box-plot figures per system as CSV"
)
def mushra_stats(scores: Path, out: Path, quartiles: Optional[Path]):
    """Medians, signed-rank and t-tests with Holm correction"""
    data = ListeningService.read_scores(scores)
    report = ListeningService.pairwise_report(data)
    ListeningService.write_report(report, out)
    if quartiles is not None:
        ListeningService.write_quartiles(ListeningService.mushra_quartiles(data), quartiles)

    logger.info(
        "%d ratings, %d systems, %d comparisons (exact signed-rank up to n=%d)",
        len(data.ratings),
        len(data.systems),
        len(report.comparisons),
        WILCOXON_EXACT_MAX_N,
    )


@listening.command("preference-stats")
@click.option(
    "--choices", type=existing_file, required=True, help="CSV with a choice column: a, b or none"
)
@click.option("--out", type=output_file, required=True)
def preference_stats(choices: Path, out: Path):
    """Preference shares and a binomial sign test"""
    result = ListeningService.preference_test(ListeningService.read_preferences(choices))
    ListeningService.write_report(result, out)
    logger.info(
        "%d choices: A %.1f%%, B %.1f%%, none %.1f%%, p=%.4g",
        result.n,
        result.a_pct,
        result.b_pct,
        result.none_pct,
        result.p_value,
    )
