import numpy as np
from pydantic import Field, field_validator, model_validator

from prosoref.common.constants import HOP_MS, MIN_SAMPLE_RATE, WINDOW_MS
from prosoref.schemas.base import ArraySchema, BaseSchema, as_bool_array, as_float_array


class Waveform(ArraySchema):
    samples: np.ndarray
    sample_rate: int = Field(ge=MIN_SAMPLE_RATE)

    @field_validator("samples", mode="before")
    @classmethod
    def check_samples(cls, value):
        samples = as_float_array(value, ndim=1)
        if samples.size == 0:
            raise ValueError("waveform is empty")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform has non-finite samples")
        if np.max(np.abs(samples)) > 1.0:
            raise ValueError("waveform samples must lie in [-1, 1]")
        return samples

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


class FrameSpec(BaseSchema):
    window_ms: float = WINDOW_MS
    hop_ms: float = HOP_MS

    @model_validator(mode="after")
    def check_hop(self):
        if not 0 < self.hop_ms <= self.window_ms:
            raise ValueError("frame spec needs 0 < hop_ms <= window_ms")
        return self

    def window_samples(self, sample_rate: int) -> int:
        return int(round(self.window_ms * sample_rate / 1000.0))

    def hop_samples(self, sample_rate: int) -> int:
        return max(1, int(round(self.hop_ms * sample_rate / 1000.0)))


class PitchTrack(ArraySchema):
    f0_hz: np.ndarray
    voiced: np.ndarray
    hop_ms: float = Field(default=HOP_MS, gt=0)
    window_ms: float = Field(default=WINDOW_MS, gt=0)

    @field_validator("f0_hz", mode="before")
    @classmethod
    def check_f0(cls, value):
        f0 = as_float_array(value, ndim=1)
        if not np.all(np.isfinite(f0)) or np.any(f0 < 0):
            raise ValueError("f0 values must be finite and non-negative")
        return f0

    @field_validator("voiced", mode="before")
    @classmethod
    def check_voiced(cls, value):
        return as_bool_array(value)

    @model_validator(mode="after")
    def check_voicing(self):
        if self.f0_hz.shape != self.voiced.shape:
            raise ValueError("f0 and voicing tracks differ in length")
        if not np.array_equal(self.f0_hz > 0, self.voiced):
            raise ValueError("f0 > 0 must coincide with voiced frames")
        return self

    @property
    def n_frames(self) -> int:
        return int(self.f0_hz.size)


class CepstralTrack(ArraySchema):
    frames: np.ndarray
    hop_ms: float = Field(default=HOP_MS, gt=0)
    window_ms: float = Field(default=WINDOW_MS, gt=0)

    @field_validator("frames", mode="before")
    @classmethod
    def check_frames(cls, value):
        frames = as_float_array(value, ndim=2)
        if not np.all(np.isfinite(frames)):
            raise ValueError("cepstral frames must be finite")
        return frames

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def n_ceps(self) -> int:
        return int(self.frames.shape[1]) if self.frames.ndim == 2 else 0

    @property
    def c0(self) -> np.ndarray:
        if self.n_frames == 0:
            return np.zeros(0)
        return self.frames[:, 0]


def track_coverage_s(n_frames: int, hop_ms: float, window_ms: float) -> float:
    """Seconds of audio spanned by ``n_frames`` analysis windows."""
    if n_frames == 0:
        return 0.0
    return ((n_frames - 1) * hop_ms + window_ms) / 1000.0
