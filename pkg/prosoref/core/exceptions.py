import json
import logging
import logging.config
import os
import sys
from pathlib import Path
from typing import Any, Optional

from prosoref.common.constants import IS_DEV, LOG_CONFIG_PATH
from prosoref.common.enum import ExitCode


class ProsorefError(Exception):
    exit_code = ExitCode.DATA

    def __init__(
        self,
        detail: str,
        path: Optional[str | Path] = None,
        line: Optional[int] = None,
        utterance: Optional[str] = None,
    ):
        super().__init__(detail)
        self.detail = detail
        self.path = str(path) if path is not None else None
        self.line = line
        self.utterance = utterance

    def with_context(
        self,
        path: Optional[str | Path] = None,
        line: Optional[int] = None,
        utterance: Optional[str] = None,
    ) -> "ProsorefError":
        if path is not None and self.path is None:
            self.path = str(path)
        if line is not None and self.line is None:
            self.line = line
        if utterance is not None and self.utterance is None:
            self.utterance = utterance
        return self

    def __str__(self) -> str:
        where = ""
        if self.path:
            where = self.path if self.line is None else f"{self.path}:{self.line}"
        elif self.line is not None:
            where = f"line {self.line}"
        if self.utterance:
            where = f"{where} [{self.utterance}]" if where else f"[{self.utterance}]"
        return f"{where}: {self.detail}" if where else self.detail


class UsageError(ProsorefError):
    exit_code = ExitCode.USAGE


class DataError(ProsorefError):
    exit_code = ExitCode.DATA


# dsp-features
class InvalidRange(DataError):
    pass


class InvalidOrder(DataError):
    pass


# alignment-io
class MalformedLine(DataError):
    pass


class OverlappingSegments(DataError):
    pass


class NonMonotoneTimes(DataError):
    pass


class IncompleteStateTriple(DataError):
    pass


class EmptySegment(DataError):
    pass


# prosody-agg / textless-ref
class EmptyCorpus(DataError):
    pass


class TrackAlignmentMismatch(DataError):
    pass


# vae-refenc
class NonFiniteInput(DataError):
    pass


class EmptyDataset(DataError):
    pass


class DivergedLoss(DataError):
    pass


class LengthMismatch(DataError):
    pass


# objective-eval
class EmptySequence(DataError):
    pass


class DimMismatch(DataError):
    pass


class NoVoicedOverlap(DataError):
    def __init__(self, detail: str, ffe_pct: float, **kwargs: Any):
        super().__init__(detail, **kwargs)
        self.ffe_pct = ffe_pct


class ZeroVariance(DataError):
    pass


# listening-stats
class EmptyScores(DataError):
    pass


class DegenerateSample(DataError):
    pass


class TooFewSamples(DataError):
    pass


class InvalidP(DataError):
    pass


# manifest
class DuplicateId(DataError):
    pass


class MissingReference(DataError):
    pass


class FileNotFound(DataError):
    def __init__(self, detail: str, missing: Optional[list[str]] = None, **kwargs: Any):
        super().__init__(detail, **kwargs)
        self.missing = missing or []


def expand_env(obj):
    """Replace whole-string ${VAR} or ${VAR:DEFAULT} values with the environment."""
    if isinstance(obj, dict):
        return {k: expand_env(v) for k, v in obj.items()}

    elif isinstance(obj, list):
        return [expand_env(i) for i in obj]

    elif isinstance(obj, str) and obj.startswith("${") and obj.endswith("}"):
        expr = obj[2:-1]

        # Support default values: ${VAR:DEFAULT}
        if ":" in expr:
            name, default = expr.split(":", 1)
            return os.getenv(name, default)

        return os.getenv(expr, "")

    return obj


def setup_logger(
    level: str = "info", dev: bool = IS_DEV, config_path: Path | str = LOG_CONFIG_PATH
) -> logging.Logger:
    level_name = level.upper()

    if dev:
        # Plain console output while developing
        logger = logging.getLogger("prosoref")
        logger.setLevel(level_name)
        logger.handlers.clear()

        handler = logging.StreamHandler(sys.stderr)
        handler.setLevel(logging.DEBUG)
        handler.setFormatter(
            logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )

        logger.addHandler(handler)
        logger.propagate = False
        return logger

    try:
        with open(config_path) as f:
            raw = json.load(f)

        logging.config.dictConfig(expand_env(raw))

        logger = logging.getLogger("prosoref")
        logger.setLevel(level_name)
        return logger

    except Exception as e:
        print("\n================ LOGGING SETUP ERROR ================\n", file=sys.stderr)
        print(f"Error while loading {config_path}: {e}\n", file=sys.stderr)
        print("Falling back to basic console logger...\n", file=sys.stderr)
        print("=====================================================\n", file=sys.stderr)

        fallback = logging.getLogger("prosoref")
        fallback.setLevel(level_name)
        fallback.handlers.clear()

        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(asctime)s - %(levelname)s - %(message)s"))

        fallback.addHandler(handler)
        fallback.propagate = False
        fallback.error(f"Failed to load logging config. Using fallback. Error: {e}")

        return fallback
