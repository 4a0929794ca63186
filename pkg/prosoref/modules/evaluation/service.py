import logging
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from prosoref.common.constants import GROSS_ERROR_THRESHOLD
from prosoref.common.utils import write_json, write_text
from prosoref.core.exceptions import (
    DimMismatch,
    EmptyCorpus,
    EmptySequence,
    LengthMismatch,
    NoVoicedOverlap,
    ZeroVariance,
)
from prosoref.schemas.evaluation import (
    AlignedF0,
    CorpusSummary,
    EvalReport,
    MetricSummary,
    WarpPath,
)
from prosoref.schemas.signal import CepstralTrack, PitchTrack

logger = logging.getLogger("prosoref.evaluation")

TABLE_COLUMNS = ("Model", "Ref.", "RMSE (Hz)", "CORR", "FFE (%)")

NO_OVERLAP = "no frame pair is voiced in both tracks"
CONSTANT_F0 = "F0 is constant over the voiced pairs; correlation is undefined"


def _as_sequence(values) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim == 1:
        array = array[:, None]
    if array.ndim != 2:
        raise DimMismatch(f"expected a sequence of vectors, got shape {array.shape}")
    return array


def _truncate(track: PitchTrack, n_frames: int) -> PitchTrack:
    return track.model_copy(
        update={"f0_hz": track.f0_hz[:n_frames], "voiced": track.voiced[:n_frames]}
    )


def _summary(values: Sequence[Optional[float]]) -> Optional[MetricSummary]:
    array = np.array([v for v in values if v is not None], dtype=np.float64)
    if array.size == 0:
        return None
    return MetricSummary(mean=float(np.mean(array)), sd=float(np.std(array)))


class EvaluationService:
    @staticmethod
    def dtw(a, b) -> tuple[WarpPath, float]:
        """Minimal Euclidean warp under steps (1,0), (0,1), (1,1); ties prefer the diagonal."""
        a, b = _as_sequence(a), _as_sequence(b)
        if a.shape[0] == 0 or b.shape[0] == 0:
            raise EmptySequence("cannot warp an empty sequence")
        if a.shape[1] != b.shape[1]:
            raise DimMismatch(f"vector dims differ: {a.shape[1]} vs {b.shape[1]}")

        rows, cols = a.shape[0], b.shape[0]
        local = cdist(a, b, metric="euclidean")

        # padded accumulated cost, acc[i + 1, j + 1] belongs to frame pair (i, j)
        acc = np.full((rows + 1, cols + 1), np.inf)
        acc[0, 0] = 0.0
        for i in range(rows):
            for j in range(cols):
                acc[i + 1, j + 1] = local[i, j] + min(acc[i, j], acc[i, j + 1], acc[i + 1, j])

        i, j = rows - 1, cols - 1
        steps = [(i, j)]
        while i > 0 or j > 0:
            move = int(np.argmin((acc[i, j], acc[i, j + 1], acc[i + 1, j])))
            if move == 0:
                i, j = i - 1, j - 1
            elif move == 1:
                i -= 1
            else:
                j -= 1
            steps.append((i, j))

        return WarpPath(steps=tuple(reversed(steps))), float(acc[rows, cols])

    @staticmethod
    def align_f0(path: WarpPath, ref: PitchTrack, syn: PitchTrack) -> AlignedF0:
        if path.end != (ref.n_frames - 1, syn.n_frames - 1):
            raise LengthMismatch(
                f"path ends at {path.end} but tracks have {ref.n_frames} and {syn.n_frames} frames"
            )
        ref_index, syn_index = path.ref_index, path.syn_index
        return AlignedF0(
            ref_f0=ref.f0_hz[ref_index],
            ref_voiced=ref.voiced[ref_index],
            syn_f0=syn.f0_hz[syn_index],
            syn_voiced=syn.voiced[syn_index],
        )

    @staticmethod
    def score_f0(pairs: AlignedF0, gross_threshold: float = GROSS_ERROR_THRESHOLD) -> EvalReport:
        """FFE always; RMSE and CORR left as None where they are undefined."""
        total = len(pairs)
        if total == 0:
            raise EmptySequence("no frame pairs to score")

        both = pairs.ref_voiced & pairs.syn_voiced
        mismatch = pairs.ref_voiced != pairs.syn_voiced
        ref, syn = pairs.ref_f0[both], pairs.syn_f0[both]
        gross = np.abs(syn - ref) / ref > gross_threshold
        n_mismatch, n_gross = int(mismatch.sum()), int(gross.sum())

        rmse = corr = undefined = None
        if not both.any():
            undefined = NO_OVERLAP
        else:
            rmse = float(np.sqrt(np.mean((syn - ref) ** 2)))
            if np.std(ref) == 0.0 or np.std(syn) == 0.0:
                undefined = CONSTANT_F0
            else:
                corr = float(np.clip(np.corrcoef(ref, syn)[0, 1], -1.0, 1.0))

        return EvalReport(
            rmse_hz=rmse,
            corr=corr,
            ffe_pct=100.0 * (n_mismatch + n_gross) / total,
            vde_pct=100.0 * n_mismatch / total,
            gpe_pct=100.0 * n_gross / total,
            n_frames=total,
            undefined=undefined,
        )

    @staticmethod
    def f0_metrics(pairs: AlignedF0, gross_threshold: float = GROSS_ERROR_THRESHOLD) -> EvalReport:
        report = EvaluationService.score_f0(pairs, gross_threshold)
        if report.rmse_hz is None:
            raise NoVoicedOverlap(report.undefined, ffe_pct=report.ffe_pct)
        if report.corr is None:
            raise ZeroVariance(report.undefined)
        return report

    @staticmethod
    def evaluate_utterance(
        ref_pitch: PitchTrack,
        ref_ceps: CepstralTrack,
        syn_pitch: PitchTrack,
        syn_ceps: CepstralTrack,
    ) -> EvalReport:
        """Warp on cepstra, reuse the path for F0, score; undefined metrics stay None."""
        n_ref = min(ref_pitch.n_frames, ref_ceps.n_frames)
        n_syn = min(syn_pitch.n_frames, syn_ceps.n_frames)
        path, cost = EvaluationService.dtw(ref_ceps.frames[:n_ref], syn_ceps.frames[:n_syn])
        pairs = EvaluationService.align_f0(
            path, _truncate(ref_pitch, n_ref), _truncate(syn_pitch, n_syn)
        )
        logger.debug("dtw: %d x %d frames, path %d, cost %.4f", n_ref, n_syn, len(path), cost)
        return EvaluationService.score_f0(pairs)

    @staticmethod
    def evaluate_corpus(
        reports: Mapping[str, EvalReport] | Sequence[EvalReport],
        system: Optional[str] = None,
        condition: Optional[str] = None,
    ) -> CorpusSummary:
        """Mean and population sd per metric over the utterances where it is defined."""
        if not isinstance(reports, Mapping):
            reports = {str(k): report for k, report in enumerate(reports)}
        if not reports:
            raise EmptyCorpus("no utterance could be evaluated")

        values = list(reports.values())
        return CorpusSummary(
            system=system,
            condition=condition,
            n_utterances=len(values),
            rmse_hz=_summary([r.rmse_hz for r in values]),
            corr=_summary([r.corr for r in values]),
            ffe_pct=_summary([r.ffe_pct for r in values]),
            reports=dict(reports),
            undefined={u: r.undefined for u, r in reports.items() if r.undefined},
        )

    @staticmethod
    def render_table(
        summaries: Sequence[CorpusSummary],
        leading: Optional[Mapping[str, Sequence[str]]] = None,
    ) -> str:
        """Aligned text table; ``leading`` adds columns such as Data or Text in front."""
        leading = dict(leading or {})
        header = [*leading, *TABLE_COLUMNS]
        rows = []
        for k, summary in enumerate(summaries):
            rows.append(
                [
                    *(values[k] for values in leading.values()),
                    summary.system or "-",
                    summary.condition or "-",
                    summary.rmse_hz.render(1) if summary.rmse_hz else "-",
                    summary.corr.render(2) if summary.corr else "-",
                    f"{summary.ffe_pct.mean:.2f}",
                ]
            )

        widths = [max(len(row[c]) for row in [header, *rows]) for c in range(len(header))]

        def line(cells: Sequence[str]) -> str:
            return " | ".join(cell.ljust(width) for cell, width in zip(cells, widths)).rstrip()

        separator = "-+-".join("-" * width for width in widths)
        return "\n".join([line(header), separator, *(line(row) for row in rows)]) + "\n"

    @staticmethod
    def write_summary(summary: CorpusSummary, path: str | Path) -> Path:
        return write_json(path, summary.model_dump(mode="json"))

    @staticmethod
    def write_table(text: str, path: str | Path) -> Path:
        return write_text(path, text)
