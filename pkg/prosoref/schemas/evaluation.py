import math
from typing import Optional

import numpy as np
from pydantic import Field, field_validator, model_validator

from prosoref.schemas.base import ArraySchema, BaseSchema, as_bool_array, as_float_array

STEPS = {(1, 0), (0, 1), (1, 1)}


class WarpPath(BaseSchema):
    steps: tuple[tuple[int, int], ...]

    @model_validator(mode="after")
    def check_steps(self):
        if not self.steps or self.steps[0] != (0, 0):
            raise ValueError("warp path must start at (0, 0)")
        for (i0, j0), (i1, j1) in zip(self.steps, self.steps[1:]):
            if (i1 - i0, j1 - j0) not in STEPS:
                raise ValueError(f"illegal step from ({i0}, {j0}) to ({i1}, {j1})")
        return self

    @property
    def end(self) -> tuple[int, int]:
        return self.steps[-1]

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def ref_index(self) -> np.ndarray:
        return np.array([i for i, _ in self.steps], dtype=int)

    @property
    def syn_index(self) -> np.ndarray:
        return np.array([j for _, j in self.steps], dtype=int)


class AlignedF0(ArraySchema):
    """F0 frame pairs along a warp path, reference first."""

    ref_f0: np.ndarray
    ref_voiced: np.ndarray
    syn_f0: np.ndarray
    syn_voiced: np.ndarray

    @field_validator("ref_f0", "syn_f0", mode="before")
    @classmethod
    def check_f0(cls, value):
        return as_float_array(value, ndim=1)

    @field_validator("ref_voiced", "syn_voiced", mode="before")
    @classmethod
    def check_voiced(cls, value):
        return as_bool_array(value)

    @model_validator(mode="after")
    def check_lengths(self):
        n = self.ref_f0.size
        if any(a.size != n for a in (self.ref_voiced, self.syn_f0, self.syn_voiced)):
            raise ValueError("paired arrays differ in length")
        return self

    def __len__(self) -> int:
        return int(self.ref_f0.size)


class EvalReport(BaseSchema):
    """Per-utterance scores; RMSE and CORR are None where undefined, FFE always exists."""

    rmse_hz: Optional[float] = Field(default=None, ge=0)
    corr: Optional[float] = Field(default=None, ge=-1.0, le=1.0)
    ffe_pct: float = Field(ge=0.0, le=100.0)
    vde_pct: float = Field(ge=0.0, le=100.0)
    gpe_pct: float = Field(ge=0.0, le=100.0)
    n_frames: int = Field(ge=1)
    undefined: Optional[str] = None

    @model_validator(mode="after")
    def check_finite(self):
        values = (self.rmse_hz, self.corr, self.ffe_pct)
        if not all(math.isfinite(v) for v in values if v is not None):
            raise ValueError("report values must be finite")
        return self


class MetricSummary(BaseSchema):
    mean: float
    sd: float = Field(ge=0)

    def render(self, digits: int) -> str:
        return f"{self.mean:.{digits}f} ± {self.sd:.{digits}f}"


class CorpusSummary(BaseSchema):
    system: Optional[str] = None
    condition: Optional[str] = None
    n_utterances: int = Field(ge=1)
    rmse_hz: Optional[MetricSummary] = None
    corr: Optional[MetricSummary] = None
    ffe_pct: MetricSummary
    reports: dict[str, EvalReport] = Field(default_factory=dict)
    undefined: dict[str, str] = Field(default_factory=dict)
