import numpy as np
import pytest
import soundfile as sf

from prosoref.core.exceptions import DataError, InvalidOrder, InvalidRange
from prosoref.modules.features.service import FeatureService
from prosoref.schemas.signal import FrameSpec, Waveform

from .conftest import SAMPLE_RATE, silence, sine

SPEC = FrameSpec()


def test_frame_count_for_one_second():
    frames = FeatureService.frame_signal(sine(220.0), SPEC)
    assert frames.shape == (98, 400)


def test_input_shorter_than_window_gives_no_frames():
    wav = sine(220.0, seconds=0.01)
    assert FeatureService.frame_signal(wav, SPEC).shape[0] == 0
    assert FeatureService.estimate_f0(wav, SPEC).n_frames == 0
    assert FeatureService.compute_cepstra(wav, SPEC).n_frames == 0


def test_sine_pitch_is_tracked():
    track = FeatureService.estimate_f0(sine(220.0), SPEC)
    interior = slice(2, track.n_frames - 2)
    voiced = track.voiced[interior]

    assert voiced.mean() >= 0.95
    assert np.mean(np.abs(track.f0_hz[interior][voiced] - 220.0)) < 2.0


@pytest.mark.parametrize("freq", [110.0, 150.0, 310.0])
def test_other_pitches_within_range(freq):
    track = FeatureService.estimate_f0(sine(freq), SPEC)
    f0 = track.f0_hz[track.voiced]
    assert f0.size > 0.9 * track.n_frames
    assert abs(np.median(f0) - freq) < 0.02 * freq


def test_silence_is_unvoiced():
    track = FeatureService.estimate_f0(silence(), SPEC)
    assert track.n_frames == 98
    assert not track.voiced.any()
    assert np.all(track.f0_hz == 0.0)


def test_invalid_f0_range():
    with pytest.raises(InvalidRange):
        FeatureService.estimate_f0(sine(220.0), SPEC, f0_min=400.0, f0_max=60.0)
    with pytest.raises(InvalidRange):
        FeatureService.estimate_f0(sine(220.0), SPEC, f0_min=60.0, f0_max=SAMPLE_RATE)


def test_invalid_cepstral_order():
    with pytest.raises(InvalidOrder):
        FeatureService.compute_cepstra(sine(220.0), SPEC, n_mels=10, n_ceps=13)


def test_cepstra_shape_and_silence_floor():
    ceps = FeatureService.compute_cepstra(sine(220.0), SPEC)
    assert ceps.frames.shape == (98, 13)

    quiet = FeatureService.compute_cepstra(silence(), SPEC)
    assert np.allclose(quiet.c0, FeatureService.silence_c0(), rtol=1e-9)
    assert np.all(ceps.c0 > quiet.c0)


def test_louder_signal_has_higher_c0():
    soft = FeatureService.compute_cepstra(sine(220.0, amp=0.05), SPEC)
    loud = FeatureService.compute_cepstra(sine(220.0, amp=0.5), SPEC)
    assert np.all(loud.c0 > soft.c0)


def test_track_files(tmp_path):
    wav = sine(180.0)
    pitch = FeatureService.estimate_f0(wav, SPEC)
    ceps = FeatureService.compute_cepstra(wav, SPEC)

    FeatureService.write_pitch(pitch, tmp_path / "a.f0.json")
    FeatureService.write_cepstra(ceps, tmp_path / "a.ceps.json")
    pitch_back = FeatureService.read_pitch(tmp_path / "a.f0.json")
    ceps_back = FeatureService.read_cepstra(tmp_path / "a.ceps.json")

    assert np.array_equal(pitch_back.f0_hz, pitch.f0_hz)
    assert np.array_equal(pitch_back.voiced, pitch.voiced)
    assert np.array_equal(ceps_back.frames, ceps.frames)
    assert pitch_back.hop_ms == 10.0


def test_pitch_file_with_inconsistent_voicing(tmp_path):
    path = tmp_path / "bad.f0.json"
    path.write_text('{"hop_ms": 10, "f0": [100.0, 0.0], "voiced": [true, true]}')
    with pytest.raises(DataError) as exc:
        FeatureService.read_pitch(path)
    assert str(path) in str(exc.value)


def test_read_wav(tmp_path):
    path = tmp_path / "tone.wav"
    sf.write(str(path), sine(220.0).samples, SAMPLE_RATE, subtype="FLOAT")
    wav = FeatureService.read_wav(path)
    assert wav.sample_rate == SAMPLE_RATE
    assert wav.samples.size == SAMPLE_RATE


def test_read_wav_rejects_stereo(tmp_path):
    path = tmp_path / "stereo.wav"
    sf.write(str(path), np.zeros((1600, 2)), SAMPLE_RATE)
    with pytest.raises(DataError):
        FeatureService.read_wav(path)


def test_load_tracks_needs_features_or_audio(tmp_path):
    with pytest.raises(DataError) as exc:
        FeatureService.load_tracks("utt1", None, tmp_path)
    assert exc.value.utterance == "utt1"


def brute_force_frame_count(n: int, window: int, hop: int) -> int:
    return sum(1 for start in range(0, n, hop) if start + window <= n)


def test_frame_count_matches_enumeration(rng):
    cases = [(25.0, 25.0, 3 * 400), (25.0, 25.0, 3 * 400 - 1), (25.0, 10.0, 400)]
    for _ in range(40):
        window_ms = float(rng.uniform(5.0, 50.0))
        hop_ms = float(rng.uniform(1.0, window_ms))
        cases.append((window_ms, hop_ms, int(rng.integers(1, 8000))))

    for window_ms, hop_ms, n in cases:
        spec = FrameSpec(window_ms=window_ms, hop_ms=hop_ms)
        window = spec.window_samples(SAMPLE_RATE)
        hop = spec.hop_samples(SAMPLE_RATE)
        wav = Waveform(samples=rng.uniform(-1.0, 1.0, n), sample_rate=SAMPLE_RATE)

        frames = FeatureService.frame_signal(wav, spec)
        expected = brute_force_frame_count(n, window, hop)
        assert frames.shape == (expected, window), (window_ms, hop_ms, n)
        if expected:
            last = (expected - 1) * hop
            assert np.array_equal(frames[-1], wav.samples[last : last + window])


def test_hop_equal_to_window_tiles_the_signal():
    spec = FrameSpec(window_ms=25.0, hop_ms=25.0)
    wav = sine(220.0, seconds=0.075)
    frames = FeatureService.frame_signal(wav, spec)
    assert frames.shape == (3, 400)
    assert np.array_equal(frames.ravel(), wav.samples)


@pytest.mark.parametrize("freq", [80.0, 120.0, 200.0, 300.0, 400.0])
def test_pitch_within_two_hz_across_range(freq):
    track = FeatureService.estimate_f0(sine(freq), SPEC)
    close = track.voiced & (np.abs(track.f0_hz - freq) <= 2.0)
    assert close.mean() >= 0.95


def test_white_noise_is_mostly_unvoiced():
    noise = np.random.default_rng(7).uniform(-0.5, 0.5, SAMPLE_RATE)
    track = FeatureService.estimate_f0(Waveform(samples=noise, sample_rate=SAMPLE_RATE), SPEC)
    assert track.voiced.mean() < 0.2


def test_amplitude_scaling_only_moves_c0():
    noise = np.random.default_rng(11).uniform(-0.05, 0.05, SAMPLE_RATE)
    soft = FeatureService.compute_cepstra(Waveform(samples=noise, sample_rate=SAMPLE_RATE), SPEC)
    loud = FeatureService.compute_cepstra(
        Waveform(samples=10.0 * noise, sample_rate=SAMPLE_RATE), SPEC
    )

    # a gain k adds 2 ln k to every log band; the orthonormal DCT puts it all in c0
    shift = np.sqrt(40) * 2.0 * np.log(10.0)
    assert np.allclose(loud.c0 - soft.c0, shift, rtol=0, atol=1e-6)
    assert np.allclose(loud.frames[:, 1:], soft.frames[:, 1:], rtol=0, atol=1e-6)


def test_tones_have_distinct_cepstra():
    low = FeatureService.compute_cepstra(sine(220.0), SPEC).frames[:, 1:]
    high = FeatureService.compute_cepstra(sine(880.0), SPEC).frames[:, 1:]

    low_mean, high_mean = low.mean(axis=0), high.mean(axis=0)
    gap = np.linalg.norm(low_mean - high_mean)
    assert gap > 1.0
