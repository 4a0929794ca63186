from pathlib import Path
from typing import Optional

from pydantic import model_validator

from prosoref.schemas.base import BaseSchema


class ManifestEntry(BaseSchema):
    id: str
    audio: Optional[Path] = None
    alignment: Optional[Path] = None
    posteriorgram: Optional[Path] = None
    speaker: str

    @model_validator(mode="after")
    def check_reference(self):
        if self.alignment is None and self.posteriorgram is None:
            raise ValueError("entry needs an alignment or a posteriorgram")
        return self

    @property
    def paths(self) -> list[Path]:
        return [p for p in (self.audio, self.alignment, self.posteriorgram) if p is not None]


class Manifest(BaseSchema):
    entries: tuple[ManifestEntry, ...] = ()

    @property
    def speakers(self) -> list[str]:
        return list(dict.fromkeys(entry.speaker for entry in self.entries))

    def by_speaker(self, speaker: str) -> list[ManifestEntry]:
        return [entry for entry in self.entries if entry.speaker == speaker]
