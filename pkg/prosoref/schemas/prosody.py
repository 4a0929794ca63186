import math

import numpy as np
from pydantic import Field, field_validator, model_validator

from prosoref.common.constants import VARIANCE_FLOOR
from prosoref.common.enum import DurationSource, FeatureSource, StatsLevel
from prosoref.schemas.base import BaseSchema

Triple = tuple[float, float, float]
SourceTriple = tuple[FeatureSource, FeatureSource, FeatureSource]

_ALL_STATE: SourceTriple = (FeatureSource.STATE, FeatureSource.STATE, FeatureSource.STATE)


class ProsodyVector(BaseSchema):
    """Seven numbers per phone: F0 and mgc0 per state plus duration."""

    phone: str
    f0_state: Triple
    mgc0_state: Triple
    duration: float
    f0_source: SourceTriple = _ALL_STATE
    mgc0_source: SourceTriple = _ALL_STATE
    duration_source: DurationSource = DurationSource.PHONE

    @model_validator(mode="after")
    def check_finite(self):
        if not all(math.isfinite(v) for v in (*self.f0_state, *self.mgc0_state, self.duration)):
            raise ValueError(f"non-finite value in prosody vector for {self.phone!r}")
        return self

    @property
    def f0_missing(self) -> tuple[bool, bool, bool]:
        missing = (source != FeatureSource.STATE for source in self.f0_source)
        return tuple(missing)  # type: ignore[return-value]

    @property
    def values(self) -> np.ndarray:
        return np.array([*self.f0_state, *self.mgc0_state, self.duration], dtype=np.float64)


class UtteranceVectors(BaseSchema):
    utterance: str
    vectors: tuple[ProsodyVector, ...] = ()


class PhoneDurationStats(BaseSchema):
    mean: float
    var: float = Field(ge=VARIANCE_FLOOR)
    count: int = Field(ge=1)


class SpeakerStats(BaseSchema):
    f0_mean: float
    f0_var: float = Field(ge=VARIANCE_FLOOR)
    mgc0_mean: float
    mgc0_var: float = Field(ge=VARIANCE_FLOOR)
    duration: dict[str, PhoneDurationStats] = Field(default_factory=dict)
    duration_mean: float
    duration_var: float = Field(ge=VARIANCE_FLOOR)
    log_duration: bool = False
    stats_level: StatsLevel = StatsLevel.FRAME

    @field_validator("f0_mean", "mgc0_mean", "duration_mean")
    @classmethod
    def check_mean(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("statistics must be finite")
        return value


class SpeakerStatsBook(BaseSchema):
    speakers: dict[str, SpeakerStats] = Field(default_factory=dict)


class AggregationConfig(BaseSchema):
    log_duration: bool = False
    stats_level: StatsLevel = StatsLevel.FRAME
