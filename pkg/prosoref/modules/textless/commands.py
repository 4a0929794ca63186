import logging
from pathlib import Path
from typing import Optional

import click

from prosoref.common.constants import PAUSE_THRESHOLD_MS
from prosoref.core.dependencies import (
    features_dir_option,
    for_entries,
    frame_options,
    frame_spec,
    manifest_option,
    output_file,
    stats_option,
)
from prosoref.core.exceptions import DataError
from prosoref.modules.features.service import FeatureService
from prosoref.modules.manifest.service import ManifestService
from prosoref.modules.prosody.service import ProsodyService
from prosoref.schemas.manifest import ManifestEntry
from prosoref.schemas.textless import UtteranceTokens

from .service import TextlessService

logger = logging.getLogger("prosoref.textless")


@click.group()
def textless():
    """Reference vectors from posteriorgrams"""


@textless.command("aggregate-textless")
@manifest_option
@stats_option
@click.option("--out", type=output_file, required=True)
@features_dir_option
@click.option("--pause-ms", type=float, default=PAUSE_THRESHOLD_MS, show_default=True)
@frame_options
def aggregate_textless(
    manifest: Path,
    stats: Path,
    out: Path,
    features_dir: Optional[Path],
    pause_ms: float,
    window_ms: float,
    hop_ms: float,
):
    """One reference vector per emitted phone or pause"""
    spec = frame_spec(window_ms, hop_ms)
    book = ProsodyService.read_stats(stats)
    entries = [e for e in ManifestService.validate_manifest(manifest).entries if e.posteriorgram]
    if not entries:
        raise DataError("no manifest entry has a posteriorgram", path=manifest)

    def run_entry(entry: ManifestEntry) -> UtteranceTokens:
        if entry.speaker not in book.speakers:
            raise DataError(f"no statistics for speaker {entry.speaker!r}", path=stats)
        pg = TextlessService.read_posteriorgram(entry.posteriorgram)
        pitch, ceps = FeatureService.load_tracks(entry.id, entry.audio, features_dir, spec)
        tokens = TextlessService.tokenize(pg, threshold_ms=pause_ms)
        vectors = TextlessService.aggregate_textless(
            tokens, pitch, ceps, pg, book.speakers[entry.speaker]
        )
        return UtteranceTokens(utterance=entry.id, vectors=tuple(vectors))

    utterances = for_entries(run_entry, entries)
    TextlessService.write_tokens(utterances, out)
    logger.info(
        "%d tokens (%d pauses) from %d utterances written to %s",
        sum(len(u.vectors) for u in utterances),
        sum(v.is_pau for u in utterances for v in u.vectors),
        len(utterances),
        out,
    )
