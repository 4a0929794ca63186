import logging
from pathlib import Path
from typing import Optional

import librosa
import numpy as np
import soundfile as sf
from scipy.fft import dct, irfft, rfft
from scipy.signal import get_window

from prosoref.common.constants import (
    CEPS_SUFFIX,
    F0_SUFFIX,
    F0_MAX_HZ,
    F0_MIN_HZ,
    LOG_FLOOR,
    N_CEPS,
    N_MELS,
    OCTAVE_GUARD,
    SILENCE_RMS,
    VOICING_THRESHOLD,
    WINDOW_MS,
)
from prosoref.common.utils import build_model, read_json, write_json
from prosoref.core.exceptions import DataError, InvalidOrder, InvalidRange, ProsorefError
from prosoref.schemas.signal import CepstralTrack, FrameSpec, PitchTrack, Waveform

logger = logging.getLogger("prosoref.features")


def next_pow2(n: int) -> int:
    return 1 << max(0, int(np.ceil(np.log2(max(n, 1)))))


class FeatureService:
    @staticmethod
    def frame_signal(wav: Waveform, spec: FrameSpec) -> np.ndarray:
        """Split the waveform into full windows; short input gives no frames."""
        window = spec.window_samples(wav.sample_rate)
        hop = spec.hop_samples(wav.sample_rate)

        if wav.samples.size < window:
            return np.empty((0, window))

        view = np.lib.stride_tricks.sliding_window_view(wav.samples, window)
        return view[::hop].copy()

    @staticmethod
    def estimate_f0(
        wav: Waveform,
        spec: FrameSpec,
        f0_min: float = F0_MIN_HZ,
        f0_max: float = F0_MAX_HZ,
    ) -> PitchTrack:
        sr = wav.sample_rate
        if not 0 < f0_min < f0_max < sr / 2:
            raise InvalidRange(
                f"f0 range must satisfy 0 < f0_min < f0_max < {sr / 2:g}, "
                f"got [{f0_min:g}, {f0_max:g}]"
            )

        frames = FeatureService.frame_signal(wav, spec)
        n_frames, width = frames.shape
        if n_frames == 0:
            return PitchTrack(
                f0_hz=np.zeros(0),
                voiced=np.zeros(0, dtype=bool),
                hop_ms=spec.hop_ms,
                window_ms=spec.window_ms,
            )

        lag_min = max(2, int(np.floor(sr / f0_max)))
        lag_max = min(width - 2, int(np.ceil(sr / f0_min)))
        if lag_max <= lag_min:
            raise InvalidRange(
                f"a {spec.window_ms:g} ms window cannot resolve f0 down to {f0_min:g} Hz"
            )

        # lags carry one extra neighbour on each side for peak tests
        lags = np.arange(lag_min - 1, lag_max + 2)

        n_fft = next_pow2(2 * width)
        power = np.abs(rfft(frames, n=n_fft, axis=1)) ** 2
        acf = irfft(power, n=n_fft, axis=1)[:, :width]

        cumulative = np.cumsum(frames**2, axis=1)
        total = cumulative[:, -1:]
        head = cumulative[:, width - lags - 1]
        tail = total - cumulative[:, lags - 1]
        denom = np.sqrt(np.maximum(head * tail, 0.0))
        nacf = np.divide(acf[:, lags], denom, out=np.zeros_like(denom), where=denom > 0)

        inner = nacf[:, 1:-1]
        peaks = (inner > nacf[:, :-2]) & (inner >= nacf[:, 2:])
        best = np.where(peaks, inner, -np.inf).max(axis=1)
        candidates = peaks & (inner >= OCTAVE_GUARD * best[:, None])
        first = np.argmax(candidates, axis=1) + 1

        rms = np.sqrt(np.mean(frames**2, axis=1))
        voiced = np.isfinite(best) & (best >= VOICING_THRESHOLD) & (rms > SILENCE_RMS)

        rows = np.arange(n_frames)
        left, centre, right = nacf[rows, first - 1], nacf[rows, first], nacf[rows, first + 1]
        curvature = left - 2.0 * centre + right
        shift = np.divide(
            0.5 * (left - right), curvature, out=np.zeros(n_frames), where=curvature < 0
        )
        lag = lags[first] + np.clip(shift, -0.5, 0.5)

        f0 = np.where(voiced, np.clip(sr / lag, f0_min, f0_max), 0.0)

        logger.debug(
            "pitch: %d frames, %d voiced, lags %d..%d",
            n_frames,
            int(voiced.sum()),
            lag_min,
            lag_max,
        )
        return PitchTrack(f0_hz=f0, voiced=voiced, hop_ms=spec.hop_ms, window_ms=spec.window_ms)

    @staticmethod
    def compute_cepstra(
        wav: Waveform,
        spec: FrameSpec,
        n_mels: int = N_MELS,
        n_ceps: int = N_CEPS,
    ) -> CepstralTrack:
        """Mel filterbank, floored log, orthonormal DCT-II; coefficient 0 is the energy proxy."""
        sr = wav.sample_rate
        width = spec.window_samples(sr)
        n_fft = next_pow2(width)
        n_bins = n_fft // 2 + 1

        if not 1 <= n_ceps <= n_mels <= n_bins:
            raise InvalidOrder(
                f"need 1 <= n_ceps <= n_mels <= {n_bins} FFT bins, "
                f"got n_ceps={n_ceps}, n_mels={n_mels}"
            )

        frames = FeatureService.frame_signal(wav, spec)
        if frames.shape[0] == 0:
            return CepstralTrack(
                frames=np.zeros((0, n_ceps)), hop_ms=spec.hop_ms, window_ms=spec.window_ms
            )

        window = get_window("hann", width)
        power = np.abs(rfft(frames * window, n=n_fft, axis=1)) ** 2
        basis = librosa.filters.mel(sr=sr, n_fft=n_fft, n_mels=n_mels, dtype=np.float64)
        log_mel = np.log(np.maximum(power @ basis.T, LOG_FLOOR))
        ceps = dct(log_mel, type=2, norm="ortho", axis=1)[:, :n_ceps]

        return CepstralTrack(frames=ceps, hop_ms=spec.hop_ms, window_ms=spec.window_ms)

    @staticmethod
    def silence_c0(n_mels: int = N_MELS) -> float:
        """c0 of a frame whose every mel band sits at the log floor."""
        return float(np.sqrt(n_mels) * np.log(LOG_FLOOR))

    @staticmethod
    def read_wav(path: str | Path) -> Waveform:
        try:
            samples, sample_rate = sf.read(str(path), dtype="float64", always_2d=True)
        except (RuntimeError, OSError) as e:
            raise DataError(f"cannot read audio: {e}", path=path) from e

        if samples.shape[1] != 1:
            raise DataError(f"expected mono audio, got {samples.shape[1]} channels", path=path)

        return build_model(
            Waveform, {"samples": samples[:, 0], "sample_rate": sample_rate}, path=path
        )

    @staticmethod
    def write_pitch(track: PitchTrack, path: str | Path) -> Path:
        return write_json(
            path,
            {
                "hop_ms": track.hop_ms,
                "window_ms": track.window_ms,
                "f0": [float(v) for v in track.f0_hz],
                "voiced": [bool(v) for v in track.voiced],
            },
        )

    @staticmethod
    def read_pitch(path: str | Path) -> PitchTrack:
        data = read_json(path)
        if not isinstance(data, dict) or "f0" not in data or "voiced" not in data:
            raise DataError("pitch track JSON needs 'f0' and 'voiced'", path=path)
        return build_model(
            PitchTrack,
            {
                "f0_hz": data["f0"],
                "voiced": data["voiced"],
                "hop_ms": data.get("hop_ms"),
                "window_ms": data.get("window_ms", WINDOW_MS),
            },
            path=path,
        )

    @staticmethod
    def write_cepstra(track: CepstralTrack, path: str | Path) -> Path:
        return write_json(
            path,
            {
                "hop_ms": track.hop_ms,
                "window_ms": track.window_ms,
                "ceps": [[float(v) for v in row] for row in track.frames],
            },
        )

    @staticmethod
    def read_cepstra(path: str | Path) -> CepstralTrack:
        data = read_json(path)
        if not isinstance(data, dict) or "ceps" not in data:
            raise DataError("cepstral track JSON needs 'ceps'", path=path)
        rows = data["ceps"]
        if rows and len({len(row) for row in rows}) != 1:
            raise DataError("cepstral frames differ in length", path=path)
        return build_model(
            CepstralTrack,
            {
                "frames": rows,
                "hop_ms": data.get("hop_ms"),
                "window_ms": data.get("window_ms", WINDOW_MS),
            },
            path=path,
        )

    @staticmethod
    def load_tracks(
        utterance: str,
        audio: Optional[Path],
        features_dir: Optional[Path] = None,
        spec: FrameSpec = FrameSpec(),
    ) -> tuple[PitchTrack, CepstralTrack]:
        """Precomputed ``<id>.f0.json``/``<id>.ceps.json`` when present, else extract from audio."""
        try:
            if features_dir is not None:
                f0_path = features_dir / f"{utterance}{F0_SUFFIX}"
                ceps_path = features_dir / f"{utterance}{CEPS_SUFFIX}"
                if f0_path.is_file() and ceps_path.is_file():
                    pitch = FeatureService.read_pitch(f0_path)
                    return pitch, FeatureService.read_cepstra(ceps_path)
            if audio is None:
                raise DataError("no precomputed features and no audio to extract them from")

            wav = FeatureService.read_wav(audio)
            return FeatureService.estimate_f0(wav, spec), FeatureService.compute_cepstra(wav, spec)
        except ProsorefError as e:
            raise e.with_context(utterance=utterance)

    @staticmethod
    def extract_files(
        audio: Path,
        out_f0: Path,
        out_ceps: Path,
        spec: FrameSpec = FrameSpec(),
        f0_min: float = F0_MIN_HZ,
        f0_max: float = F0_MAX_HZ,
    ) -> tuple[PitchTrack, CepstralTrack]:
        wav = FeatureService.read_wav(audio)
        pitch = FeatureService.estimate_f0(wav, spec, f0_min=f0_min, f0_max=f0_max)
        ceps = FeatureService.compute_cepstra(wav, spec)
        FeatureService.write_pitch(pitch, out_f0)
        FeatureService.write_cepstra(ceps, out_ceps)
        logger.debug(
            "%s: %.2f s, %d frames, %d voiced",
            audio,
            wav.duration_s,
            pitch.n_frames,
            int(pitch.voiced.sum()),
        )
        return pitch, ceps
