import logging
import math
from pathlib import Path
from typing import Optional

from prosoref.common.constants import BOUNDARY_DECIMALS, LABEL_DECIMALS, N_STATES
from prosoref.common.utils import read_text, write_text
from prosoref.core.exceptions import (
    EmptySegment,
    IncompleteStateTriple,
    MalformedLine,
    NonMonotoneTimes,
    OverlappingSegments,
    ProsorefError,
)
from prosoref.schemas.alignment import Interval, PhoneAlignment, PhoneSegment

logger = logging.getLogger("prosoref.alignment")


def _number(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedLine(f"not a time value: {text!r}", line=line)
    if not math.isfinite(value) or value < 0:
        raise MalformedLine(f"time must be finite and non-negative: {text!r}", line=line)
    return value


def _state_index(text: str, line: int) -> int:
    try:
        index = int(text)
    except ValueError:
        raise MalformedLine(f"state index must be an integer: {text!r}", line=line)
    if not 1 <= index <= N_STATES:
        raise MalformedLine(f"state index must be in 1..{N_STATES}, got {index}", line=line)
    return index


class AlignmentService:
    @staticmethod
    def tri_partition(start_s: float, end_s: float) -> tuple[Interval, Interval, Interval]:
        """Split [start_s, end_s) into three contiguous equal states."""
        if not start_s < end_s:
            raise EmptySegment(f"segment [{start_s}, {end_s}) is empty")

        step = (end_s - start_s) / N_STATES
        cuts = [round(start_s + k * step, BOUNDARY_DECIMALS) for k in (1, 2)]
        if not start_s < cuts[0] < cuts[1] < end_s:
            cuts = [start_s + step, start_s + 2 * step]

        bounds = [start_s, *cuts, end_s]
        states = (Interval(start_s=a, end_s=b) for a, b in zip(bounds, bounds[1:]))
        return tuple(states)  # type: ignore[return-value]

    @staticmethod
    def parse_alignment(text: str) -> PhoneAlignment:
        segments: list[PhoneSegment] = []
        pending: list[tuple[int, str, float, float]] = []
        last_end = 0.0

        def check_overlap(start: float, line: int):
            if segments and start < last_end:
                raise OverlappingSegments(
                    f"segment starts at {start} before the previous one ends at {last_end}",
                    line=line,
                )

        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue

            columns = [c.strip() for c in line.rstrip("\r\n").split("\t")]
            if len(columns) not in (3, 4) or not columns[2]:
                raise MalformedLine(
                    "expected start<TAB>end<TAB>phone[<TAB>state]", line=number
                )

            start, end = _number(columns[0], number), _number(columns[1], number)
            phone = columns[2]
            if end <= start:
                raise NonMonotoneTimes(f"end {end} is not after start {start}", line=number)

            if len(columns) == 3:
                if pending:
                    raise IncompleteStateTriple(
                        f"phone {pending[0][1]!r} has {len(pending)} of {N_STATES} states",
                        line=pending[0][0],
                    )
                check_overlap(start, number)
                segments.append(
                    PhoneSegment(
                        phone=phone,
                        start_s=start,
                        end_s=end,
                        states=AlignmentService.tri_partition(start, end),
                    )
                )
                last_end = end
                continue

            index = _state_index(columns[3], number)
            if not pending:
                if index != 1:
                    raise IncompleteStateTriple(
                        f"state {index} of {phone!r} without state 1", line=number
                    )
                check_overlap(start, number)
            else:
                if phone != pending[0][1] or index != len(pending) + 1:
                    raise IncompleteStateTriple(
                        f"expected state {len(pending) + 1} of {pending[0][1]!r}, "
                        f"got state {index} of {phone!r}",
                        line=number,
                    )
                if start != pending[-1][3]:
                    raise IncompleteStateTriple(
                        f"state {index} of {phone!r} is not contiguous with state {index - 1}",
                        line=number,
                    )
            pending.append((number, phone, start, end))

            if len(pending) == N_STATES:
                states = tuple(Interval(start_s=s, end_s=e) for _, _, s, e in pending)
                segments.append(
                    PhoneSegment(
                        phone=phone,
                        start_s=pending[0][2],
                        end_s=pending[-1][3],
                        states=states,  # type: ignore[arg-type]
                        explicit_states=True,
                    )
                )
                last_end = pending[-1][3]
                pending = []

        if pending:
            raise IncompleteStateTriple(
                f"phone {pending[0][1]!r} has {len(pending)} of {N_STATES} states",
                line=pending[0][0],
            )

        total = segments[-1].end_s if segments else 0.0
        return PhoneAlignment(segments=tuple(segments), total_s=total)

    @staticmethod
    def format_alignment(alignment: PhoneAlignment) -> str:
        fmt = f"%.{LABEL_DECIMALS}f"
        lines = []
        for segment in alignment.segments:
            if segment.explicit_states:
                for index, state in enumerate(segment.states, start=1):
                    lines.append(
                        f"{fmt % state.start_s}\t{fmt % state.end_s}\t{segment.phone}\t{index}"
                    )
            else:
                lines.append(f"{fmt % segment.start_s}\t{fmt % segment.end_s}\t{segment.phone}")
        return "".join(line + "\n" for line in lines)

    @staticmethod
    def read_alignment(path: str | Path) -> PhoneAlignment:
        try:
            return AlignmentService.parse_alignment(read_text(path))
        except ProsorefError as e:
            raise e.with_context(path=path)

    @staticmethod
    def write_alignment(alignment: PhoneAlignment, path: str | Path) -> Path:
        return write_text(path, AlignmentService.format_alignment(alignment))

    @staticmethod
    def frames_in_interval(
        interval: Interval | tuple[float, float], hop_ms: float, n_frames: int
    ) -> range:
        """Frames whose centre (i + 1/2)·hop falls in [start, end), clipped to the track."""
        if isinstance(interval, Interval):
            start_s, end_s = interval.start_s, interval.end_s
        else:
            start_s, end_s = interval

        def first_centre_at_or_after(t: float) -> int:
            return math.ceil(round(t * 1000.0 / hop_ms - 0.5, BOUNDARY_DECIMALS))

        first = min(max(first_centre_at_or_after(start_s), 0), n_frames)
        stop = min(max(first_centre_at_or_after(end_s), first), n_frames)
        return range(first, stop)

    @staticmethod
    def state_frames(
        segment: PhoneSegment, hop_ms: float, n_frames: int
    ) -> list[range]:
        return [
            AlignmentService.frames_in_interval(state, hop_ms, n_frames)
            for state in segment.states
        ]

    @staticmethod
    def segment_frames(segment: PhoneSegment, hop_ms: float, n_frames: int) -> range:
        return AlignmentService.frames_in_interval(
            (segment.start_s, segment.end_s), hop_ms, n_frames
        )
