import csv
import io
import logging
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from prosoref.common.constants import N_STATES, VARIANCE_FLOOR
from prosoref.common.enum import DurationSource, FeatureSource, StatsLevel
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
from prosoref.modules.alignment.service import AlignmentService
from prosoref.schemas.alignment import PhoneAlignment
from prosoref.schemas.prosody import (
    AggregationConfig,
    PhoneDurationStats,
    ProsodyVector,
    SpeakerStats,
    SpeakerStatsBook,
    UtteranceVectors,
)
from prosoref.schemas.signal import CepstralTrack, PitchTrack, track_coverage_s

logger = logging.getLogger("prosoref.prosody")

Utterance = tuple[PitchTrack, CepstralTrack, PhoneAlignment]

CSV_HEADER = (
    "utterance",
    "phone",
    *(f"f0_{k}" for k in range(1, N_STATES + 1)),
    *(f"mgc0_{k}" for k in range(1, N_STATES + 1)),
    "dur",
    "flags",
)


def _mean_or_none(values: np.ndarray) -> Optional[float]:
    return float(np.mean(values)) if values.size else None


def _ladder(*levels: tuple[Optional[float], FeatureSource]) -> tuple[float, FeatureSource]:
    """First available value, walking state -> phone -> utterance."""
    for value, source in levels:
        if value is not None:
            return value, source
    return 0.0, FeatureSource.NONE


def _own_values(values: Sequence[float], sources: Sequence[FeatureSource]) -> np.ndarray:
    """State values that were measured, not filled in by the fallback ladder."""
    return np.array([v for v, s in zip(values, sources) if s == FeatureSource.STATE])


def _floored_var(values: np.ndarray) -> float:
    return max(float(np.var(values)) if values.size else 0.0, VARIANCE_FLOOR)


def _zscore(value: float, mean: float, var: float) -> float:
    return (value - mean) / math.sqrt(var)


def check_tracks(pitch: PitchTrack, ceps: CepstralTrack, align: PhoneAlignment) -> int:
    """Validate that tracks agree with each other and with the alignment; return usable frames."""
    if not math.isclose(pitch.hop_ms, ceps.hop_ms, rel_tol=1e-9):
        raise TrackAlignmentMismatch(
            f"pitch hop {pitch.hop_ms} ms differs from cepstral hop {ceps.hop_ms} ms"
        )
    if abs(pitch.n_frames - ceps.n_frames) > 1:
        raise TrackAlignmentMismatch(
            f"pitch has {pitch.n_frames} frames, cepstra {ceps.n_frames}"
        )

    n_frames = min(pitch.n_frames, ceps.n_frames)
    if align.segments:
        coverage = track_coverage_s(n_frames, pitch.hop_ms, pitch.window_ms)
        if abs(coverage - align.total_s) > pitch.hop_ms / 1000.0 + 1e-9:
            raise TrackAlignmentMismatch(
                f"tracks cover {coverage:.3f} s but the alignment spans {align.total_s:.3f} s"
            )
    return n_frames


class ProsodyService:
    @staticmethod
    def aggregate_utterance(
        pitch: PitchTrack, ceps: CepstralTrack, align: PhoneAlignment
    ) -> list[ProsodyVector]:
        """One raw vector per phone segment, in alignment order."""
        n_frames = check_tracks(pitch, ceps, align)
        f0 = pitch.f0_hz[:n_frames]
        voiced = pitch.voiced[:n_frames]
        c0 = ceps.c0[:n_frames]

        utt_f0 = _mean_or_none(f0[voiced])
        utt_c0 = _mean_or_none(c0)

        vectors = []
        for segment in align.segments:
            states = AlignmentService.state_frames(segment, pitch.hop_ms, n_frames)
            phone_frames = AlignmentService.segment_frames(segment, pitch.hop_ms, n_frames)
            span = slice(phone_frames.start, phone_frames.stop)
            phone_f0 = _mean_or_none(f0[span][voiced[span]])
            phone_c0 = _mean_or_none(c0[span])

            f0_values, f0_sources, c0_values, c0_sources = [], [], [], []
            for frames in states:
                idx = slice(frames.start, frames.stop)
                value, source = _ladder(
                    (_mean_or_none(f0[idx][voiced[idx]]), FeatureSource.STATE),
                    (phone_f0, FeatureSource.PHONE),
                    (utt_f0, FeatureSource.UTTERANCE),
                )
                f0_values.append(value)
                f0_sources.append(source)

                value, source = _ladder(
                    (_mean_or_none(c0[idx]), FeatureSource.STATE),
                    (phone_c0, FeatureSource.PHONE),
                    (utt_c0, FeatureSource.UTTERANCE),
                )
                c0_values.append(value)
                c0_sources.append(source)

            vectors.append(
                ProsodyVector(
                    phone=segment.phone,
                    f0_state=tuple(f0_values),  # type: ignore[arg-type]
                    mgc0_state=tuple(c0_values),  # type: ignore[arg-type]
                    duration=segment.end_s - segment.start_s,
                    f0_source=tuple(f0_sources),  # type: ignore[arg-type]
                    mgc0_source=tuple(c0_sources),  # type: ignore[arg-type]
                )
            )

        missing = sum(v.f0_missing.count(True) for v in vectors)
        if missing:
            logger.debug("%d of %d states fell back for F0", missing, N_STATES * len(vectors))
        return vectors

    @staticmethod
    def collect_speaker_stats(
        corpus: Sequence[Utterance], config: AggregationConfig = AggregationConfig()
    ) -> SpeakerStats:
        if not corpus:
            raise EmptyCorpus("no utterances to collect statistics from")

        f0_parts, c0_parts = [], []
        durations: dict[str, list[float]] = {}
        all_durations: list[float] = []

        for number, (pitch, ceps, align) in enumerate(corpus):
            try:
                n_frames = check_tracks(pitch, ceps, align)
            except TrackAlignmentMismatch as e:
                raise e.with_context(utterance=f"#{number}")

            if config.stats_level == StatsLevel.FRAME:
                f0_parts.append(pitch.f0_hz[:n_frames][pitch.voiced[:n_frames]])
                c0_parts.append(ceps.c0[:n_frames])
            else:
                for vector in ProsodyService.aggregate_utterance(pitch, ceps, align):
                    f0_parts.append(_own_values(vector.f0_state, vector.f0_source))
                    c0_parts.append(_own_values(vector.mgc0_state, vector.mgc0_source))

            for segment in align.segments:
                duration = segment.end_s - segment.start_s
                if config.log_duration:
                    duration = math.log(duration)
                durations.setdefault(segment.phone, []).append(duration)
                all_durations.append(duration)

        f0_values = np.concatenate(f0_parts) if f0_parts else np.zeros(0)
        c0_values = np.concatenate(c0_parts) if c0_parts else np.zeros(0)
        if not f0_values.size:
            logger.warning("no voiced frames in corpus; F0 statistics default to 0")

        all_values = np.array(all_durations)
        stats = SpeakerStats(
            f0_mean=_mean_or_none(f0_values) or 0.0,
            f0_var=_floored_var(f0_values),
            mgc0_mean=_mean_or_none(c0_values) or 0.0,
            mgc0_var=_floored_var(c0_values),
            duration={
                phone: PhoneDurationStats(
                    mean=float(np.mean(values)),
                    var=_floored_var(np.array(values)),
                    count=len(values),
                )
                for phone, values in durations.items()
            },
            duration_mean=_mean_or_none(all_values) or 0.0,
            duration_var=_floored_var(all_values),
            log_duration=config.log_duration,
            stats_level=config.stats_level,
        )
        logger.debug(
            "stats over %d utterances: %d F0 values, %d phones",
            len(corpus),
            f0_values.size,
            len(durations),
        )
        return stats

    @staticmethod
    def normalize(vectors: Iterable[ProsodyVector], stats: SpeakerStats) -> list[ProsodyVector]:
        """z-score with speaker statistics; duration against the phone's own statistics."""
        normalized = []
        for vector in vectors:
            f0 = tuple(
                0.0 if source == FeatureSource.NONE else _zscore(v, stats.f0_mean, stats.f0_var)
                for v, source in zip(vector.f0_state, vector.f0_source)
            )
            c0 = tuple(
                0.0
                if source == FeatureSource.NONE
                else _zscore(v, stats.mgc0_mean, stats.mgc0_var)
                for v, source in zip(vector.mgc0_state, vector.mgc0_source)
            )

            duration = math.log(vector.duration) if stats.log_duration else vector.duration
            phone_stats = stats.duration.get(vector.phone)
            if phone_stats is not None:
                dur = _zscore(duration, phone_stats.mean, phone_stats.var)
                dur_source = DurationSource.PHONE
            else:
                dur = _zscore(duration, stats.duration_mean, stats.duration_var)
                dur_source = DurationSource.GLOBAL
                logger.debug("phone %r unseen in stats; global duration stats used", vector.phone)

            normalized.append(
                vector.model_copy(
                    update={
                        "f0_state": f0,
                        "mgc0_state": c0,
                        "duration": dur,
                        "duration_source": dur_source,
                    }
                )
            )
        return normalized

    @staticmethod
    def format_flags(vector: ProsodyVector) -> str:
        flags = []
        for name, sources in (("f0", vector.f0_source), ("mgc0", vector.mgc0_source)):
            for k, source in enumerate(sources, start=1):
                if source != FeatureSource.STATE:
                    flags.append(f"{name}_{k}={source.value}")
        if vector.duration_source == DurationSource.GLOBAL:
            flags.append("dur=global")
        return ";".join(flags)

    @staticmethod
    def parse_flags(text: str, line: Optional[int] = None) -> dict:
        f0 = [FeatureSource.STATE] * N_STATES
        c0 = [FeatureSource.STATE] * N_STATES
        duration = DurationSource.PHONE
        for token in filter(None, text.split(";")):
            key, _, value = token.partition("=")
            try:
                if key == "dur":
                    duration = DurationSource(value)
                    continue
                name, _, k = key.partition("_")
                target = {"f0": f0, "mgc0": c0}[name]
                target[int(k) - 1] = FeatureSource(value)
            except (KeyError, ValueError, IndexError):
                raise DataError(f"unknown flag {token!r}", line=line)
        return {
            "f0_source": tuple(f0),
            "mgc0_source": tuple(c0),
            "duration_source": duration,
        }

    @staticmethod
    def format_vectors(utterances: Iterable[UtteranceVectors]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for utterance in utterances:
            for vector in utterance.vectors:
                writer.writerow(
                    [
                        utterance.utterance,
                        vector.phone,
                        *(format_float(v) for v in vector.f0_state),
                        *(format_float(v) for v in vector.mgc0_state),
                        format_float(vector.duration),
                        ProsodyService.format_flags(vector),
                    ]
                )
        return buffer.getvalue()

    @staticmethod
    def parse_vectors(text: str, path: Optional[str | Path] = None) -> list[UtteranceVectors]:
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise DataError(f"expected header {','.join(CSV_HEADER)}", path=path, line=1)

        grouped: dict[str, list[ProsodyVector]] = {}
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise DataError(
                    f"expected {len(CSV_HEADER)} columns, got {len(row)}", path=path, line=line
                )
            numbers = [parse_float(cell, path=path, line=line) for cell in row[2:9]]
            vector = build_model(
                ProsodyVector,
                {
                    "phone": row[1],
                    "f0_state": numbers[0:3],
                    "mgc0_state": numbers[3:6],
                    "duration": numbers[6],
                    **ProsodyService.parse_flags(row[9], line=line),
                },
                path=path,
                line=line,
            )
            grouped.setdefault(row[0], []).append(vector)

        return [UtteranceVectors(utterance=k, vectors=tuple(v)) for k, v in grouped.items()]

    @staticmethod
    def read_vectors(path: str | Path) -> list[UtteranceVectors]:
        try:
            return ProsodyService.parse_vectors(read_text(path), path=path)
        except DataError as e:
            raise e.with_context(path=path)

    @staticmethod
    def write_vectors(utterances: Iterable[UtteranceVectors], path: str | Path) -> Path:
        return write_text(path, ProsodyService.format_vectors(utterances))

    @staticmethod
    def write_stats(book: SpeakerStatsBook, path: str | Path) -> Path:
        return write_json(path, book.model_dump(mode="json"))

    @staticmethod
    def read_stats(path: str | Path) -> SpeakerStatsBook:
        return build_model(SpeakerStatsBook, read_json(path), path=path)
