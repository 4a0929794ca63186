import asyncio
import json
import math
from pathlib import Path
from typing import Any, Awaitable, Callable, Iterable, Optional, Sequence, TypeVar

from pydantic import BaseModel, ValidationError

from prosoref.core.exceptions import DataError

T = TypeVar("T")
R = TypeVar("R")
M = TypeVar("M", bound=BaseModel)


def safe_json_loads(data, default=None):
    try:
        return json.loads(data)
    except (json.JSONDecodeError, TypeError):
        return default


def read_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise DataError("file not found", path=path) from e

    data = safe_json_loads(text)
    if data is None:
        raise DataError("not valid JSON", path=path)
    return data


def write_json(path: str | Path, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path


def read_text(path: str | Path) -> str:
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise DataError("file not found", path=path) from e
    except UnicodeDecodeError as e:
        raise DataError("file is not UTF-8", path=path) from e


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def build_model(
    model: type[M],
    data: Any,
    path: Optional[str | Path] = None,
    line: Optional[int] = None,
) -> M:
    """Validate ``data`` into ``model``, reporting failures as data errors."""
    try:
        return model.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ())) or model.__name__
        raise DataError(f"{where}: {first['msg']}", path=path, line=line) from e


def format_float(value: float) -> str:
    """Shortest text that parses back to the same double."""
    if not math.isfinite(value):
        raise DataError(f"cannot serialize non-finite value {value!r}")
    return repr(float(value))


def parse_float(text: str, path: Optional[str | Path] = None, line: Optional[int] = None) -> float:
    try:
        value = float(text)
    except ValueError as e:
        raise DataError(f"not a number: {text!r}", path=path, line=line) from e
    if not math.isfinite(value):
        raise DataError(f"non-finite value: {text!r}", path=path, line=line)
    return value


def content_lines(text: str) -> Iterable[tuple[int, str]]:
    """Yield (1-based line number, line) skipping blanks and '#' comments."""
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield number, line


async def _gather_ordered(
    func: Callable[[T], R], items: Sequence[T], workers: int
) -> list[R]:
    semaphore = asyncio.Semaphore(max(1, workers))

    async def call(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(func, item)

    tasks: list[Awaitable[R]] = [call(item) for item in items]
    return list(await asyncio.gather(*tasks))


def gather_ordered(func: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """Run ``func`` over ``items`` on worker threads; results keep input order."""
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    return asyncio.run(_gather_ordered(func, items, workers))

