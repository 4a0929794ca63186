import math

import numpy as np
from pydantic import Field, field_validator, model_validator

from prosoref.common.constants import BLANK_SYMBOL, HOP_MS, PAUSE_PHONE
from prosoref.common.enum import FeatureSource
from prosoref.schemas.base import ArraySchema, BaseSchema, as_float_array

ROW_SUM_TOLERANCE = 1e-6


class Posteriorgram(ArraySchema):
    phones: tuple[str, ...]
    rows: np.ndarray
    hop_ms: float = Field(default=HOP_MS, gt=0)

    @field_validator("phones")
    @classmethod
    def check_phones(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        if len(value) < 2 or value[-1] != BLANK_SYMBOL:
            raise ValueError(f"phone inventory must end with {BLANK_SYMBOL!r}")
        if len(set(value)) != len(value):
            raise ValueError("phone inventory has duplicates")
        return value

    @field_validator("rows", mode="before")
    @classmethod
    def check_rows(cls, value):
        rows = as_float_array(value, ndim=2)
        if rows.size and not np.all(np.isfinite(rows)):
            raise ValueError("posterior probabilities must be finite")
        if rows.size and (np.any(rows < 0.0) or np.any(rows > 1.0)):
            raise ValueError("posterior probabilities must lie in [0, 1]")
        if rows.size and np.any(np.abs(rows.sum(axis=1) - 1.0) > ROW_SUM_TOLERANCE):
            raise ValueError("posterior rows must sum to 1")
        return rows

    @model_validator(mode="after")
    def check_width(self):
        if self.rows.size and self.rows.shape[1] != len(self.phones):
            raise ValueError(
                f"rows have {self.rows.shape[1]} columns for {len(self.phones)} phones"
            )
        return self

    @property
    def n_frames(self) -> int:
        return int(self.rows.shape[0])

    @property
    def blank_index(self) -> int:
        return len(self.phones) - 1


class Emission(BaseSchema):
    """A stable argmax run; pause tokens reuse the shape with a blank run."""

    phone: str
    run_start: int = Field(ge=0)
    run_end: int = Field(ge=0)
    rep_frame: int = Field(ge=0)
    is_pau: bool = False

    @model_validator(mode="after")
    def check_run(self):
        if not self.run_start <= self.rep_frame <= self.run_end:
            raise ValueError("rep_frame must lie inside the run")
        if self.is_pau and self.phone != PAUSE_PHONE:
            raise ValueError(f"pause tokens are labelled {PAUSE_PHONE!r}")
        return self

    @property
    def n_frames(self) -> int:
        return self.run_end - self.run_start + 1


class TextlessRefVector(BaseSchema):
    phone: str
    f0: float
    mgc0: float
    d_prev_s: float = Field(ge=0)
    d_next_s: float = Field(ge=0)
    d_prev: float
    d_next: float
    posterior_row: tuple[float, ...]
    is_pau: bool = False
    f0_source: FeatureSource = FeatureSource.RUN
    mgc0_source: FeatureSource = FeatureSource.RUN
    normalized: bool = False

    @model_validator(mode="after")
    def check_values(self):
        if not all(math.isfinite(v) for v in (self.f0, self.mgc0, self.d_prev, self.d_next)):
            raise ValueError(f"non-finite value in reference vector for {self.phone!r}")
        if abs(math.fsum(self.posterior_row) - 1.0) > ROW_SUM_TOLERANCE:
            raise ValueError("posterior row must sum to 1")
        return self


class UtteranceTokens(BaseSchema):
    utterance: str
    vectors: tuple[TextlessRefVector, ...] = ()
