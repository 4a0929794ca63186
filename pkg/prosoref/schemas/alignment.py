from pydantic import model_validator

from prosoref.common.constants import N_STATES
from prosoref.schemas.base import BaseSchema


class Interval(BaseSchema):
    start_s: float
    end_s: float

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


class PhoneSegment(BaseSchema):
    phone: str
    start_s: float
    end_s: float
    states: tuple[Interval, Interval, Interval]
    explicit_states: bool = False  # states came from the label file, not an equal split

    @model_validator(mode="after")
    def check_states(self):
        if not self.start_s < self.end_s:
            raise ValueError(f"segment {self.phone!r} has start >= end")
        if len(self.states) != N_STATES:
            raise ValueError(f"segment {self.phone!r} needs {N_STATES} states")
        if self.states[0].start_s != self.start_s or self.states[-1].end_s != self.end_s:
            raise ValueError(f"states of {self.phone!r} do not cover the segment")
        for state in self.states:
            if not state.start_s < state.end_s:
                raise ValueError(f"segment {self.phone!r} has an empty state")
        for prev, nxt in zip(self.states, self.states[1:]):
            if prev.end_s != nxt.start_s:
                raise ValueError(f"states of {self.phone!r} are not contiguous")
        return self

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


class PhoneAlignment(BaseSchema):
    segments: tuple[PhoneSegment, ...] = ()
    total_s: float = 0.0

    @model_validator(mode="after")
    def check_order(self):
        for prev, nxt in zip(self.segments, self.segments[1:]):
            if nxt.start_s < prev.end_s:
                raise ValueError("segments overlap or are out of order")
        if self.segments and self.total_s < self.segments[-1].end_s:
            raise ValueError("total_s is shorter than the last segment")
        return self

    @property
    def phones(self) -> list[str]:
        return [segment.phone for segment in self.segments]
