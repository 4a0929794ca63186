from typing import Optional

from pydantic import Field, model_validator

from prosoref.schemas.base import BaseSchema


class MushraRating(BaseSchema):
    listener: str
    utterance: str
    system: str
    score: float = Field(ge=0.0, le=100.0)
    condition: Optional[str] = None

    @property
    def block(self) -> tuple[str, str, str]:
        return (self.condition or "", self.listener, self.utterance)


class MushraScores(BaseSchema):
    systems: tuple[str, ...]
    ratings: tuple[MushraRating, ...] = ()

    @model_validator(mode="after")
    def check_blocks(self):
        expected = set(self.systems)
        if len(expected) != len(self.systems):
            raise ValueError("system list has duplicates")

        blocks: dict[tuple[str, str, str], list[str]] = {}
        for rating in self.ratings:
            if rating.system not in expected:
                raise ValueError(f"unknown system {rating.system!r}")
            blocks.setdefault(rating.block, []).append(rating.system)

        for block, systems in blocks.items():
            if len(systems) != len(set(systems)):
                raise ValueError(f"block {block[1:]} rates a system twice")
            if set(systems) != expected:
                missing = ", ".join(sorted(expected - set(systems)))
                raise ValueError(f"block {block[1:]} is missing {missing}")
        return self

    @property
    def conditions(self) -> list[str]:
        seen: dict[str, None] = {}
        for rating in self.ratings:
            if rating.condition is not None:
                seen.setdefault(rating.condition, None)
        return list(seen)

    def for_condition(self, condition: str) -> "MushraScores":
        return MushraScores(
            systems=self.systems,
            ratings=tuple(r for r in self.ratings if r.condition == condition),
        )


class Quartiles(BaseSchema):
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


class HolmResult(BaseSchema):
    """Decisions and adjusted p-values in input order."""

    alpha: float
    reject: tuple[bool, ...]
    adjusted: tuple[float, ...]


class PairComparison(BaseSchema):
    system_a: str
    system_b: str
    n_pairs: int
    wilcoxon_p: Optional[float] = None
    wilcoxon_error: Optional[str] = None
    t_p: Optional[float] = None
    t_error: Optional[str] = None
    # alpha (as text) -> decision
    wilcoxon_reject: dict[str, bool] = Field(default_factory=dict)
    t_reject: dict[str, bool] = Field(default_factory=dict)
    wilcoxon_adjusted: Optional[float] = None
    t_adjusted: Optional[float] = None


class ListeningReport(BaseSchema):
    condition: Optional[str] = None
    medians: dict[str, float]
    comparisons: tuple[PairComparison, ...] = ()
    conditions: tuple["ListeningReport", ...] = ()


class PreferenceResult(BaseSchema):
    n: int
    a_pct: float
    b_pct: float
    none_pct: float
    p_value: float
