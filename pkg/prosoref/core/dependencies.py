# Shared options and helpers for subcommands

from pathlib import Path
from typing import Callable, Optional, Sequence, TypeVar

import click

from prosoref.common.constants import HOP_MS, WINDOW_MS
from prosoref.common.utils import gather_ordered
from prosoref.core.config import get_settings
from prosoref.core.exceptions import ProsorefError
from prosoref.schemas.manifest import ManifestEntry
from prosoref.schemas.signal import FrameSpec

T = TypeVar("T")

existing_file = click.Path(exists=True, dir_okay=False, path_type=Path)
existing_dir = click.Path(exists=True, file_okay=False, path_type=Path)
output_file = click.Path(dir_okay=False, path_type=Path)

manifest_option = click.option(
    "--manifest",
    type=existing_file,
    required=True,
    help="TSV: id audio alignment posteriorgram speaker",
)
features_dir_option = click.option(
    "--features-dir",
    type=existing_dir,
    default=None,
    help="Directory with precomputed <id>.f0.json / <id>.ceps.json",
)
stats_option = click.option(
    "--stats", type=existing_file, required=True, help="Speaker statistics JSON from stats-collect"
)


def frame_options(func):
    func = click.option("--hop-ms", type=float, default=HOP_MS, show_default=True)(func)
    func = click.option("--window-ms", type=float, default=WINDOW_MS, show_default=True)(func)
    return func


def frame_spec(window_ms: float, hop_ms: float) -> FrameSpec:
    try:
        return FrameSpec(window_ms=window_ms, hop_ms=hop_ms)
    except ValueError as e:
        raise click.BadParameter(str(e).splitlines()[-1], param_hint="--window-ms/--hop-ms")


def for_entries(
    func: Callable[[ManifestEntry], T],
    entries: Sequence[ManifestEntry],
    workers: Optional[int] = None,
) -> list[T]:
    """Run ``func`` per manifest entry on the worker pool, results in manifest order."""

    def call(entry: ManifestEntry) -> T:
        try:
            return func(entry)
        except ProsorefError as e:
            raise e.with_context(utterance=entry.id)

    return gather_ordered(call, entries, workers or get_settings().workers)
