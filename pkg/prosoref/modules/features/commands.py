import logging
from pathlib import Path
from typing import Optional

import click

from prosoref.common.constants import CEPS_SUFFIX, F0_MAX_HZ, F0_MIN_HZ, F0_SUFFIX
from prosoref.core.dependencies import (
    existing_file,
    for_entries,
    frame_options,
    frame_spec,
    output_file,
)
from prosoref.core.exceptions import DataError
from prosoref.modules.manifest.service import ManifestService
from prosoref.schemas.manifest import ManifestEntry

from .service import FeatureService

logger = logging.getLogger("prosoref.features")


@click.group()
def features():
    """Feature extraction"""


@features.command()
@click.option("--audio", type=existing_file, help="Single mono WAV file")
@click.option("--out-f0", type=output_file)
@click.option("--out-ceps", type=output_file)
@click.option("--manifest", type=existing_file, help="Extract every entry with audio")
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--f0-min", type=float, default=F0_MIN_HZ, show_default=True)
@click.option("--f0-max", type=float, default=F0_MAX_HZ, show_default=True)
@frame_options
def extract(
    audio: Optional[Path],
    out_f0: Optional[Path],
    out_ceps: Optional[Path],
    manifest: Optional[Path],
    out_dir: Optional[Path],
    f0_min: float,
    f0_max: float,
    window_ms: float,
    hop_ms: float,
):
    """Write F0 and cepstral tracks as JSON"""
    spec = frame_spec(window_ms, hop_ms)

    def run_one(source: Path, f0_path: Path, ceps_path: Path) -> int:
        pitch, _ = FeatureService.extract_files(
            source, f0_path, ceps_path, spec, f0_min=f0_min, f0_max=f0_max
        )
        return pitch.n_frames

    if audio is not None:
        if manifest is not None or out_f0 is None or out_ceps is None:
            raise click.UsageError("--audio needs --out-f0 and --out-ceps, and excludes --manifest")
        n_frames = run_one(audio, out_f0, out_ceps)
        logger.info("extracted %d frames from %s", n_frames, audio)
        return

    if manifest is None or out_dir is None:
        raise click.UsageError(
            "give either --audio with --out-f0/--out-ceps or --manifest with --out-dir"
        )

    entries = ManifestService.validate_manifest(manifest).entries

    def run_entry(entry: ManifestEntry) -> int:
        if entry.audio is None:
            raise DataError("entry has no audio to extract from")
        return run_one(
            entry.audio,
            out_dir / f"{entry.id}{F0_SUFFIX}",
            out_dir / f"{entry.id}{CEPS_SUFFIX}",
        )

    counts = for_entries(run_entry, entries)
    logger.info("extracted %d utterances (%d frames) into %s", len(counts), sum(counts), out_dir)
