import csv
import io
import logging
import math
from itertools import groupby
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from prosoref.common.constants import (
    BLANK_SYMBOL,
    PAUSE_PHONE,
    PAUSE_THRESHOLD_MS,
    VARIANCE_FLOOR,
)
from prosoref.common.enum import FeatureSource, StatsLevel
from prosoref.common.utils import (
    build_model,
    format_float,
    parse_float,
    read_json,
    read_text,
    write_json,
    write_text,
)
from prosoref.core.exceptions import DataError, EmptyCorpus, TrackAlignmentMismatch
from prosoref.schemas.prosody import SpeakerStats
from prosoref.schemas.signal import CepstralTrack, PitchTrack
from prosoref.schemas.textless import Emission, Posteriorgram, TextlessRefVector, UtteranceTokens

logger = logging.getLogger("prosoref.textless")

TOKEN_HEADER = (
    "utterance",
    "phone",
    "is_pau",
    "f0",
    "mgc0",
    "d_prev_s",
    "d_next_s",
    "d_prev",
    "d_next",
    "flags",
    "posterior",
)


def _run_mean(values: np.ndarray) -> Optional[float]:
    return float(np.mean(values)) if values.size else None


def _floored_var(values: np.ndarray) -> float:
    return max(float(np.var(values)) if values.size else 0.0, VARIANCE_FLOOR)


def _frames_to_s(frames: int, hop_ms: float) -> float:
    return frames * hop_ms / 1000.0


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def check_tracks(pitch: PitchTrack, ceps: CepstralTrack, pg: Posteriorgram) -> int:
    """Tracks and posteriorgram must share the hop and agree in length within a frame."""
    for name, hop in (("pitch", pitch.hop_ms), ("cepstral", ceps.hop_ms)):
        if not math.isclose(hop, pg.hop_ms, rel_tol=1e-9):
            raise TrackAlignmentMismatch(
                f"{name} hop {hop} ms differs from posteriorgram hop {pg.hop_ms} ms"
            )
    lengths = (pitch.n_frames, ceps.n_frames, pg.n_frames)
    if max(lengths) - min(lengths) > 1:
        raise TrackAlignmentMismatch(
            f"frame counts differ by more than one: pitch {lengths[0]}, "
            f"cepstra {lengths[1]}, posteriorgram {lengths[2]}"
        )
    return min(lengths)


class TextlessService:
    @staticmethod
    def greedy_emissions(pg: Posteriorgram) -> list[Emission]:
        """Collapse repeated argmax labels, drop blanks; each run emits once at its middle."""
        labels = np.argmax(pg.rows, axis=1) if pg.n_frames else np.zeros(0, dtype=int)

        emissions, start = [], 0
        for label, run in groupby(labels.tolist()):
            end = start + sum(1 for _ in run) - 1
            if label != pg.blank_index:
                emissions.append(
                    Emission(
                        phone=pg.phones[label],
                        run_start=start,
                        run_end=end,
                        rep_frame=(start + end) // 2,
                    )
                )
            start = end + 1
        return emissions

    @staticmethod
    def blank_runs(pg: Posteriorgram) -> list[tuple[int, int]]:
        """Maximal runs of argmax-blank frames as inclusive (start, end)."""
        if not pg.n_frames:
            return []
        blank = np.argmax(pg.rows, axis=1) == pg.blank_index

        runs, start = [], 0
        for is_blank, run in groupby(blank.tolist()):
            end = start + sum(1 for _ in run) - 1
            if is_blank:
                runs.append((start, end))
            start = end + 1
        return runs

    @staticmethod
    def insert_pauses(
        emissions: Sequence[Emission],
        blank_runs: Sequence[tuple[int, int]],
        hop_ms: float,
        threshold_ms: float = PAUSE_THRESHOLD_MS,
    ) -> list[Emission]:
        pauses = [
            Emission(
                phone=PAUSE_PHONE,
                run_start=start,
                run_end=end,
                rep_frame=(start + end) // 2,
                is_pau=True,
            )
            for start, end in blank_runs
            if (end - start + 1) * hop_ms > threshold_ms
        ]
        # stable sort: emissions keep their relative order
        tokens = sorted([*emissions, *pauses], key=lambda token: token.run_start)
        logger.debug("%d emissions, %d pauses", len(emissions), len(pauses))
        return tokens

    @staticmethod
    def tokenize(pg: Posteriorgram, threshold_ms: float = PAUSE_THRESHOLD_MS) -> list[Emission]:
        return TextlessService.insert_pauses(
            TextlessService.greedy_emissions(pg),
            TextlessService.blank_runs(pg),
            pg.hop_ms,
            threshold_ms,
        )

    @staticmethod
    def measure_textless(
        tokens: Sequence[Emission], pitch: PitchTrack, ceps: CepstralTrack, pg: Posteriorgram
    ) -> list[TextlessRefVector]:
        """Raw per-token values: run means in Hz and cepstral units, distances in seconds."""
        n_frames = check_tracks(pitch, ceps, pg)
        f0 = pitch.f0_hz[:n_frames]
        voiced = pitch.voiced[:n_frames]
        c0 = ceps.c0[:n_frames]
        utt_f0 = _run_mean(f0[voiced])
        utt_c0 = _run_mean(c0)
        end_frame = pg.n_frames

        vectors = []
        for k, token in enumerate(tokens):
            if token.run_end >= pg.n_frames:
                raise TrackAlignmentMismatch(
                    f"token {token.phone!r} ends at frame {token.run_end} "
                    f"past the posteriorgram ({pg.n_frames} frames)"
                )
            run = slice(token.run_start, token.run_end + 1)

            f0_value, f0_source = _run_mean(f0[run][voiced[run]]), FeatureSource.RUN
            if f0_value is None:
                f0_value, f0_source = utt_f0, FeatureSource.UTTERANCE
            if f0_value is None:
                f0_value, f0_source = 0.0, FeatureSource.NONE

            c0_value, c0_source = _run_mean(c0[run]), FeatureSource.RUN
            if c0_value is None:
                c0_value, c0_source = utt_c0, FeatureSource.UTTERANCE
            if c0_value is None:
                c0_value, c0_source = 0.0, FeatureSource.NONE

            prev_frame = tokens[k - 1].rep_frame if k > 0 else 0
            next_frame = tokens[k + 1].rep_frame if k + 1 < len(tokens) else end_frame
            d_prev = _frames_to_s(token.rep_frame - prev_frame, pg.hop_ms)
            d_next = _frames_to_s(next_frame - token.rep_frame, pg.hop_ms)

            vectors.append(
                TextlessRefVector(
                    phone=token.phone,
                    f0=f0_value,
                    mgc0=c0_value,
                    d_prev_s=d_prev,
                    d_next_s=d_next,
                    d_prev=d_prev,
                    d_next=d_next,
                    posterior_row=tuple(float(p) for p in pg.rows[token.rep_frame]),
                    is_pau=token.is_pau,
                    f0_source=f0_source,
                    mgc0_source=c0_source,
                )
            )
        return vectors

    @staticmethod
    def normalize_textless(
        vectors: Iterable[TextlessRefVector], stats: SpeakerStats, hop_ms: float
    ) -> list[TextlessRefVector]:
        """Speaker z-scores; distances use the global duration statistics."""
        f0_sd, c0_sd, d_sd = (
            math.sqrt(stats.f0_var),
            math.sqrt(stats.mgc0_var),
            math.sqrt(stats.duration_var),
        )
        floor_s = hop_ms / 1000.0

        def distance(value: float) -> float:
            if stats.log_duration:
                # a zero distance has no logarithm; one frame is the resolution
                value = math.log(max(value, floor_s))
            return (value - stats.duration_mean) / d_sd

        normalized = []
        for vector in vectors:
            normalized.append(
                vector.model_copy(
                    update={
                        "f0": 0.0
                        if vector.f0_source == FeatureSource.NONE
                        else (vector.f0 - stats.f0_mean) / f0_sd,
                        "mgc0": 0.0
                        if vector.mgc0_source == FeatureSource.NONE
                        else (vector.mgc0 - stats.mgc0_mean) / c0_sd,
                        "d_prev": distance(vector.d_prev_s),
                        "d_next": distance(vector.d_next_s),
                        "normalized": True,
                    }
                )
            )
        return normalized

    @staticmethod
    def aggregate_textless(
        tokens: Sequence[Emission],
        pitch: PitchTrack,
        ceps: CepstralTrack,
        pg: Posteriorgram,
        stats: SpeakerStats,
    ) -> list[TextlessRefVector]:
        return TextlessService.normalize_textless(
            TextlessService.measure_textless(tokens, pitch, ceps, pg), stats, pg.hop_ms
        )

    @staticmethod
    def collect_speaker_stats(
        corpus: Sequence[tuple[PitchTrack, CepstralTrack, Posteriorgram]],
        log_duration: bool = False,
    ) -> SpeakerStats:
        """Statistics without an alignment: frame F0 and c0, token distances as durations."""
        if not corpus:
            raise EmptyCorpus("no utterances to collect statistics from")

        f0_parts, c0_parts, distances = [], [], []
        for pitch, ceps, pg in corpus:
            n_frames = check_tracks(pitch, ceps, pg)
            f0_parts.append(pitch.f0_hz[:n_frames][pitch.voiced[:n_frames]])
            c0_parts.append(ceps.c0[:n_frames])
            floor_s = pg.hop_ms / 1000.0
            for vector in TextlessService.measure_textless(
                TextlessService.tokenize(pg), pitch, ceps, pg
            ):
                for value in (vector.d_prev_s, vector.d_next_s):
                    distances.append(math.log(max(value, floor_s)) if log_duration else value)

        f0_values = np.concatenate(f0_parts)
        c0_values = np.concatenate(c0_parts)
        d_values = np.array(distances)

        return SpeakerStats(
            f0_mean=_run_mean(f0_values) or 0.0,
            f0_var=_floored_var(f0_values),
            mgc0_mean=_run_mean(c0_values) or 0.0,
            mgc0_var=_floored_var(c0_values),
            duration_mean=_run_mean(d_values) or 0.0,
            duration_var=_floored_var(d_values),
            log_duration=log_duration,
            stats_level=StatsLevel.FRAME,
        )

    @staticmethod
    def format_posteriorgram(pg: Posteriorgram) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(pg.phones)
        for row in pg.rows:
            writer.writerow([format_float(p) for p in row])
        return buffer.getvalue()

    @staticmethod
    def parse_posteriorgram(
        text: str, hop_ms: float, path: Optional[str | Path] = None
    ) -> Posteriorgram:
        reader = csv.reader(io.StringIO(text))
        phones = next(reader, None)
        if not phones or phones[-1] != BLANK_SYMBOL:
            raise DataError(
                f"header must list the phones and end with {BLANK_SYMBOL}", path=path, line=1
            )

        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(phones):
                raise DataError(
                    f"expected {len(phones)} probabilities, got {len(row)}", path=path, line=line
                )
            rows.append([parse_float(cell, path=path, line=line) for cell in row])

        return build_model(
            Posteriorgram,
            {
                "phones": tuple(phones),
                "rows": np.array(rows, dtype=np.float64).reshape(len(rows), len(phones)),
                "hop_ms": hop_ms,
            },
            path=path,
        )

    @staticmethod
    def read_posteriorgram(path: str | Path) -> Posteriorgram:
        meta = read_json(sidecar_path(path))
        if not isinstance(meta, dict) or "hop_ms" not in meta:
            raise DataError("posteriorgram sidecar needs 'hop_ms'", path=sidecar_path(path))
        hop_ms = parse_float(str(meta["hop_ms"]), path=sidecar_path(path))
        return TextlessService.parse_posteriorgram(read_text(path), hop_ms, path=path)

    @staticmethod
    def write_posteriorgram(pg: Posteriorgram, path: str | Path) -> Path:
        write_json(sidecar_path(path), {"hop_ms": pg.hop_ms})
        return write_text(path, TextlessService.format_posteriorgram(pg))

    @staticmethod
    def format_flags(vector: TextlessRefVector) -> str:
        flags = []
        if vector.f0_source != FeatureSource.RUN:
            flags.append(f"f0={vector.f0_source.value}")
        if vector.mgc0_source != FeatureSource.RUN:
            flags.append(f"mgc0={vector.mgc0_source.value}")
        return ";".join(flags)

    @staticmethod
    def format_tokens(utterances: Iterable[UtteranceTokens]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(TOKEN_HEADER)
        for utterance in utterances:
            for vector in utterance.vectors:
                writer.writerow(
                    [
                        utterance.utterance,
                        vector.phone,
                        int(vector.is_pau),
                        format_float(vector.f0),
                        format_float(vector.mgc0),
                        format_float(vector.d_prev_s),
                        format_float(vector.d_next_s),
                        format_float(vector.d_prev),
                        format_float(vector.d_next),
                        TextlessService.format_flags(vector),
                        " ".join(format_float(p) for p in vector.posterior_row),
                    ]
                )
        return buffer.getvalue()

    @staticmethod
    def write_tokens(utterances: Iterable[UtteranceTokens], path: str | Path) -> Path:
        return write_text(path, TextlessService.format_tokens(utterances))
