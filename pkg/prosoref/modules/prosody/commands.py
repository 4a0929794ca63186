import logging
from pathlib import Path
from typing import Optional

import click

from prosoref.common.enum import StatsLevel
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
from prosoref.modules.alignment.service import AlignmentService
from prosoref.modules.features.service import FeatureService
from prosoref.modules.manifest.service import ManifestService
from prosoref.modules.textless.service import TextlessService
from prosoref.schemas.manifest import ManifestEntry
from prosoref.schemas.prosody import AggregationConfig, SpeakerStatsBook, UtteranceVectors

from .service import ProsodyService

logger = logging.getLogger("prosoref.prosody")


@click.group()
def prosody():
    """Phone-level prosody aggregation"""


@prosody.command("stats-collect")
@manifest_option
@click.option("--out", type=output_file, required=True)
@features_dir_option
@click.option("--log-duration", is_flag=True, help="Normalize ln(duration) instead of seconds")
@click.option(
    "--stats-level",
    type=click.Choice([level.value for level in StatsLevel]),
    default=StatsLevel.FRAME.value,
    show_default=True,
    help=(
        "Pooling level for means and variances. Only state gives every normalized "
        "dimension exactly mean 0 and variance 1 over the corpus; frame is the default."
    ),
)
@frame_options
def stats_collect(
    manifest: Path,
    out: Path,
    features_dir: Optional[Path],
    log_duration: bool,
    stats_level: str,
    window_ms: float,
    hop_ms: float,
):
    """Per-speaker F0, c0 and duration statistics"""
    spec = frame_spec(window_ms, hop_ms)
    config = AggregationConfig(log_duration=log_duration, stats_level=StatsLevel(stats_level))
    entries = ManifestService.validate_manifest(manifest).entries

    def load(entry: ManifestEntry):
        pitch, ceps = FeatureService.load_tracks(entry.id, entry.audio, features_dir, spec)
        if entry.alignment is not None:
            return pitch, ceps, AlignmentService.read_alignment(entry.alignment)
        return pitch, ceps, TextlessService.read_posteriorgram(entry.posteriorgram)

    loaded = dict(zip((e.id for e in entries), for_entries(load, entries)))

    speakers = {}
    for speaker in dict.fromkeys(entry.speaker for entry in entries):
        own = [e for e in entries if e.speaker == speaker]
        aligned = [loaded[e.id] for e in own if e.alignment is not None]
        if aligned:
            speakers[speaker] = ProsodyService.collect_speaker_stats(aligned, config)
        else:
            # posteriorgram-only speaker: distances between tokens stand in for durations
            speakers[speaker] = TextlessService.collect_speaker_stats(
                [loaded[e.id] for e in own], log_duration=log_duration
            )
        logger.debug("speaker %s: %d utterances", speaker, len(own))

    ProsodyService.write_stats(SpeakerStatsBook(speakers=speakers), out)
    logger.info("statistics for %d speakers written to %s", len(speakers), out)


@prosody.command()
@manifest_option
@stats_option
@click.option("--out", type=output_file, required=True)
@features_dir_option
@click.option("--raw", is_flag=True, help="Write unnormalized vectors")
@frame_options
def aggregate(
    manifest: Path,
    stats: Path,
    out: Path,
    features_dir: Optional[Path],
    raw: bool,
    window_ms: float,
    hop_ms: float,
):
    """One prosody vector per aligned phone"""
    spec = frame_spec(window_ms, hop_ms)
    book = ProsodyService.read_stats(stats)
    entries = [e for e in ManifestService.validate_manifest(manifest).entries if e.alignment]
    if not entries:
        raise DataError("no manifest entry has an alignment", path=manifest)

    def run_entry(entry: ManifestEntry) -> UtteranceVectors:
        if entry.speaker not in book.speakers:
            raise DataError(f"no statistics for speaker {entry.speaker!r}", path=stats)
        pitch, ceps = FeatureService.load_tracks(entry.id, entry.audio, features_dir, spec)
        vectors = ProsodyService.aggregate_utterance(
            pitch, ceps, AlignmentService.read_alignment(entry.alignment)
        )
        if not raw:
            vectors = ProsodyService.normalize(vectors, book.speakers[entry.speaker])
        return UtteranceVectors(utterance=entry.id, vectors=tuple(vectors))

    utterances = for_entries(run_entry, entries)
    ProsodyService.write_vectors(utterances, out)
    logger.info(
        "%d vectors from %d utterances written to %s",
        sum(len(u.vectors) for u in utterances),
        len(utterances),
        out,
    )
