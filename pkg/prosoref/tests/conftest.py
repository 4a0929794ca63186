from typing import Optional, Sequence

import numpy as np
import pytest

from prosoref.common.constants import BLANK_SYMBOL
from prosoref.core.config import get_settings
from prosoref.modules.alignment.service import AlignmentService
from prosoref.schemas.alignment import PhoneAlignment, PhoneSegment
from prosoref.schemas.signal import CepstralTrack, PitchTrack, Waveform
from prosoref.schemas.textless import Posteriorgram

SAMPLE_RATE = 16000
HOP = 10.0

# synthetic tracks use window == hop so that n frames cover exactly n * hop
TRACK_WINDOW = 10.0


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    monkeypatch.delenv("PROSOREF_LOG", raising=False)
    monkeypatch.delenv("PROSOREF_WORKERS", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


def sine(freq: float, seconds: float = 1.0, sr: int = SAMPLE_RATE, amp: float = 0.5) -> Waveform:
    t = np.arange(int(round(seconds * sr))) / sr
    return Waveform(samples=amp * np.sin(2 * np.pi * freq * t), sample_rate=sr)


def silence(seconds: float = 1.0, sr: int = SAMPLE_RATE) -> Waveform:
    return Waveform(samples=np.zeros(int(round(seconds * sr))), sample_rate=sr)


def pitch_track(f0: Sequence[float], hop_ms: float = HOP) -> PitchTrack:
    f0 = np.asarray(f0, dtype=np.float64)
    return PitchTrack(f0_hz=f0, voiced=f0 > 0, hop_ms=hop_ms, window_ms=TRACK_WINDOW)


def ceps_track(c0: Sequence[float], hop_ms: float = HOP, n_ceps: int = 3) -> CepstralTrack:
    c0 = np.asarray(c0, dtype=np.float64)
    frames = np.zeros((c0.size, n_ceps))
    frames[:, 0] = c0
    if n_ceps > 1:
        frames[:, 1:] = np.linspace(-1.0, 1.0, c0.size)[:, None]
    return CepstralTrack(frames=frames, hop_ms=hop_ms, window_ms=TRACK_WINDOW)


def alignment(phones: Sequence[tuple[str, int]], hop_ms: float = HOP) -> PhoneAlignment:
    """Phones with durations in whole frames, back to back from 0."""
    segments, start = [], 0
    for phone, frames in phones:
        start_s, end_s = start * hop_ms / 1000.0, (start + frames) * hop_ms / 1000.0
        segments.append(
            PhoneSegment(
                phone=phone,
                start_s=start_s,
                end_s=end_s,
                states=AlignmentService.tri_partition(start_s, end_s),
            )
        )
        start += frames
    return PhoneAlignment(segments=tuple(segments), total_s=start * hop_ms / 1000.0)


def make_utterance(
    rng: np.random.Generator,
    inventory: Sequence[str] = ("AH", "T", "S", "IY", "N"),
    n_phones: Optional[int] = None,
    unvoiced_share: float = 0.2,
):
    n_phones = n_phones or int(rng.integers(6, 11))
    phones = [(str(rng.choice(inventory)), int(rng.integers(3, 16))) for _ in range(n_phones)]
    align = alignment(phones)
    n_frames = sum(frames for _, frames in phones)

    f0 = rng.uniform(100.0, 250.0, n_frames)
    f0[rng.random(n_frames) < unvoiced_share] = 0.0
    c0 = rng.normal(-20.0, 4.0, n_frames)
    return pitch_track(f0), ceps_track(c0), align


def make_corpus(seed: int = 0, n_utterances: int = 6):
    rng = np.random.default_rng(seed)
    return [make_utterance(rng) for _ in range(n_utterances)]


def posteriorgram(
    labels: Sequence[int], phones: Sequence[str] = ("AH", "T", "S"), hop_ms: float = HOP
) -> Posteriorgram:
    """Rows peaked at ``labels``; -1 stands for the blank."""
    inventory = (*phones, BLANK_SYMBOL)
    k = len(inventory)
    rows = np.full((len(labels), k), 0.2 / (k - 1))
    for row, label in zip(rows, labels):
        row[label % k] = 0.8
    return Posteriorgram(phones=inventory, rows=rows, hop_ms=hop_ms)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
