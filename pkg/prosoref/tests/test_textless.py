import math

import numpy as np
import pytest

from prosoref.common.constants import PAUSE_PHONE
from prosoref.common.enum import FeatureSource
from prosoref.core.exceptions import DataError, EmptyCorpus, TrackAlignmentMismatch
from prosoref.modules.textless.service import TextlessService
from prosoref.schemas.prosody import SpeakerStats
from prosoref.schemas.textless import Emission, Posteriorgram

from .conftest import ceps_track, pitch_track, posteriorgram

AH, T, S, BLANK = 0, 1, 2, -1


def runs(tokens):
    return [(t.phone, t.run_start, t.run_end, t.rep_frame) for t in tokens]


def test_greedy_collapse():
    pg = posteriorgram([BLANK, BLANK, AH, AH, BLANK, T])
    assert runs(TextlessService.greedy_emissions(pg)) == [("AH", 2, 3, 2), ("T", 5, 5, 5)]


def test_all_blank_emits_nothing():
    assert TextlessService.greedy_emissions(posteriorgram([BLANK] * 10)) == []


def test_blank_separates_repeated_labels():
    pg = posteriorgram([AH, BLANK, AH])
    assert [t.phone for t in TextlessService.greedy_emissions(pg)] == ["AH", "AH"]
    assert [t.phone for t in TextlessService.greedy_emissions(posteriorgram([AH, AH, AH]))] == [
        "AH"
    ]


def test_emissions_depend_only_on_argmax(rng):
    labels = rng.integers(-1, 3, 60)
    rows = rng.dirichlet(np.ones(4) * 0.3, size=60) * 0.5
    # push each row's label well above the rest
    rows[np.arange(60), labels % 4] += 0.5
    noisy = Posteriorgram(
        phones=("AH", "T", "S", "<blank>"), rows=rows / rows.sum(axis=1, keepdims=True)
    )
    assert TextlessService.greedy_emissions(noisy) == TextlessService.greedy_emissions(
        posteriorgram(labels.tolist())
    )


@pytest.mark.parametrize("blanks, pauses", [(25, 1), (20, 0), (15, 0)])
def test_pause_threshold(blanks, pauses):
    pg = posteriorgram([AH, AH] + [BLANK] * blanks + [T, T])
    tokens = TextlessService.tokenize(pg)
    assert sum(t.is_pau for t in tokens) == pauses
    assert [t.phone for t in tokens if not t.is_pau] == ["AH", "T"]


def test_pause_sits_between_its_neighbours():
    pg = posteriorgram([AH] + [BLANK] * 25 + [T])
    assert [t.phone for t in TextlessService.tokenize(pg)] == ["AH", PAUSE_PHONE, "T"]


def test_leading_pause():
    pg = posteriorgram([BLANK] * 25 + [AH, T])
    tokens = TextlessService.tokenize(pg)
    assert tokens[0].is_pau
    assert (tokens[0].run_start, tokens[0].run_end, tokens[0].rep_frame) == (0, 24, 12)


def test_blank_runs():
    pg = posteriorgram([BLANK, AH, BLANK, BLANK, T, BLANK])
    assert TextlessService.blank_runs(pg) == [(0, 0), (2, 3), (5, 5)]


def tracks(n=30, f0=150.0):
    f0 = np.full(n, f0) if np.isscalar(f0) else np.asarray(f0)
    return pitch_track(f0), ceps_track(np.linspace(-25.0, -15.0, n))


def test_distances_between_neighbours():
    tokens = [
        Emission(phone="AH", run_start=4, run_end=6, rep_frame=5),
        Emission(phone="T", run_start=11, run_end=13, rep_frame=12),
        Emission(phone="S", run_start=19, run_end=21, rep_frame=20),
    ]
    pitch, ceps = tracks()
    first, middle, last = TextlessService.measure_textless(
        tokens, pitch, ceps, posteriorgram([AH] * 30)
    )

    assert middle.d_prev_s == 0.07
    assert middle.d_next_s == 0.08
    assert first.d_prev_s == 0.05
    assert last.d_next_s == 0.1
    assert first.d_next_s == middle.d_prev_s
    assert middle.d_next_s == last.d_prev_s


def test_run_means_and_posterior_row():
    f0 = np.full(30, 150.0)
    f0[:3] = (200.0, 210.0, 220.0)
    pitch, ceps = tracks(f0=f0)
    pg = posteriorgram([AH, AH, AH] + [BLANK] * 27)
    (vector,) = TextlessService.measure_textless(
        TextlessService.greedy_emissions(pg), pitch, ceps, pg
    )

    assert vector.f0 == 210.0
    assert vector.f0_source == FeatureSource.RUN
    assert vector.mgc0 == pytest.approx(np.mean(ceps.c0[:3]))
    assert vector.posterior_row == tuple(pg.rows[1])
    assert math.fsum(vector.posterior_row) == pytest.approx(1.0)


def test_unvoiced_run_falls_back_to_utterance():
    f0 = np.full(30, 120.0)
    f0[:3] = 0.0
    pitch, ceps = tracks(f0=f0)
    pg = posteriorgram([AH, AH, AH] + [BLANK] * 27)
    (vector,) = TextlessService.measure_textless(
        TextlessService.greedy_emissions(pg), pitch, ceps, pg
    )
    assert vector.f0 == 120.0
    assert vector.f0_source == FeatureSource.UTTERANCE
    assert TextlessService.format_flags(vector) == "f0=utterance"


def test_length_mismatch():
    pitch, ceps = tracks(n=30)
    with pytest.raises(TrackAlignmentMismatch):
        TextlessService.measure_textless([], pitch, ceps, posteriorgram([AH] * 25))
    pitch, ceps = tracks(n=31)
    assert TextlessService.measure_textless([], pitch, ceps, posteriorgram([AH] * 30)) == []


def test_normalize_with_speaker_stats():
    stats = SpeakerStats(
        f0_mean=150.0,
        f0_var=100.0,
        mgc0_mean=-20.0,
        mgc0_var=25.0,
        duration_mean=0.05,
        duration_var=0.0004,
    )
    tokens = [
        Emission(phone="AH", run_start=0, run_end=2, rep_frame=1),
        Emission(phone="T", run_start=6, run_end=8, rep_frame=7),
    ]
    pitch, ceps = tracks(f0=160.0)
    first, second = TextlessService.aggregate_textless(
        tokens, pitch, ceps, posteriorgram([AH] * 30), stats
    )
    assert first.normalized
    assert first.f0 == pytest.approx(1.0)
    assert first.d_next == pytest.approx((0.06 - 0.05) / 0.02)
    assert second.d_prev == first.d_next
    assert first.d_prev_s == 0.01


def test_log_distance_floor():
    stats = SpeakerStats(
        f0_mean=150.0,
        f0_var=100.0,
        mgc0_mean=-20.0,
        mgc0_var=25.0,
        duration_mean=math.log(0.01),
        duration_var=1.0,
        log_duration=True,
    )
    token = Emission(phone="AH", run_start=0, run_end=0, rep_frame=0)
    pitch, ceps = tracks()
    (vector,) = TextlessService.aggregate_textless(
        [token], pitch, ceps, posteriorgram([AH] * 30), stats
    )
    assert vector.d_prev_s == 0.0
    assert vector.d_prev == 0.0


def test_collect_stats_from_posteriorgrams():
    pitch, ceps = tracks(f0=np.where(np.arange(30) % 2, 100.0, 200.0))
    pg = posteriorgram([AH] * 10 + [T] * 10 + [S] * 10)
    stats = TextlessService.collect_speaker_stats([(pitch, ceps, pg)])

    assert stats.f0_mean == 150.0
    assert stats.f0_var == 2500.0
    assert not stats.duration
    # reps at frames 4, 14, 24 of 30
    assert stats.duration_mean == pytest.approx(np.mean([0.04, 0.1, 0.1, 0.1, 0.1, 0.06]))

    with pytest.raises(EmptyCorpus):
        TextlessService.collect_speaker_stats([])


def test_posteriorgram_file_is_byte_stable(tmp_path, rng):
    rows = rng.dirichlet(np.ones(4), size=12)
    pg = Posteriorgram(phones=("AH", "T", "S", "<blank>"), rows=rows, hop_ms=20.0)
    path = tmp_path / "utt.pg.csv"
    TextlessService.write_posteriorgram(pg, path)

    back = TextlessService.read_posteriorgram(path)
    assert back.hop_ms == 20.0
    assert back.phones == pg.phones
    assert np.array_equal(back.rows, pg.rows)
    assert TextlessService.format_posteriorgram(back) == path.read_text()


def test_posteriorgram_validation():
    with pytest.raises(DataError):
        TextlessService.parse_posteriorgram("AH,T\n0.5,0.5\n", 10.0)
    with pytest.raises(DataError):
        TextlessService.parse_posteriorgram("AH,<blank>\n0.5,0.6\n", 10.0)
    with pytest.raises(DataError) as exc:
        TextlessService.parse_posteriorgram("AH,<blank>\n0.5,0.5\n1.0\n", 10.0)
    assert exc.value.line == 3
