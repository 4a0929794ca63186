import logging
from pathlib import Path
from typing import Optional

from prosoref.common.constants import MANIFEST_COLUMNS
from prosoref.common.utils import content_lines, read_text
from prosoref.core.exceptions import DataError, DuplicateId, FileNotFound, MissingReference
from prosoref.schemas.manifest import Manifest, ManifestEntry

logger = logging.getLogger("prosoref.manifest")


def _resolve(value: str, base: Path) -> Optional[Path]:
    if not value:
        return None
    path = Path(value)
    return path if path.is_absolute() else base / path


class ManifestService:
    @staticmethod
    def parse_manifest(text: str, base: Path, path: Optional[str | Path] = None) -> Manifest:
        lines = list(content_lines(text))
        if not lines:
            raise DataError("manifest is empty", path=path)

        header_line, header = lines[0]
        if tuple(c.strip() for c in header.split("\t")) != MANIFEST_COLUMNS:
            raise DataError(
                f"expected header {' '.join(MANIFEST_COLUMNS)} (tab separated)",
                path=path,
                line=header_line,
            )

        entries: list[ManifestEntry] = []
        seen: dict[str, int] = {}
        for number, line in lines[1:]:
            cells = [c.strip() for c in line.split("\t")]
            if len(cells) > len(MANIFEST_COLUMNS):
                raise DataError(
                    f"expected {len(MANIFEST_COLUMNS)} columns, got {len(cells)}",
                    path=path,
                    line=number,
                )
            cells += [""] * (len(MANIFEST_COLUMNS) - len(cells))
            row = dict(zip(MANIFEST_COLUMNS, cells))

            if not row["id"] or not row["speaker"]:
                raise DataError("id and speaker are required", path=path, line=number)
            if row["id"] in seen:
                raise DuplicateId(
                    f"id {row['id']!r} already used on line {seen[row['id']]}",
                    path=path,
                    line=number,
                )
            if not row["alignment"] and not row["posteriorgram"]:
                raise MissingReference(
                    f"{row['id']!r} has neither an alignment nor a posteriorgram",
                    path=path,
                    line=number,
                )
            seen[row["id"]] = number

            entries.append(
                ManifestEntry(
                    id=row["id"],
                    audio=_resolve(row["audio"], base),
                    alignment=_resolve(row["alignment"], base),
                    posteriorgram=_resolve(row["posteriorgram"], base),
                    speaker=row["speaker"],
                )
            )
        return Manifest(entries=tuple(entries))

    @staticmethod
    def validate_manifest(path: str | Path) -> Manifest:
        """Parse, check ids and references, and report every missing file at once."""
        path = Path(path)
        manifest = ManifestService.parse_manifest(read_text(path), path.parent, path=path)

        missing = [str(p) for entry in manifest.entries for p in entry.paths if not p.is_file()]
        if missing:
            raise FileNotFound(
                f"{len(missing)} missing file(s): {', '.join(missing)}", missing=missing, path=path
            )

        logger.debug(
            "manifest %s: %d entries, %d speakers",
            path,
            len(manifest.entries),
            len(manifest.speakers),
        )
        return manifest
