import csv
import io
import logging
import math
from itertools import combinations
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import betainc
from scipy.stats import binomtest, norm, rankdata

from prosoref.common.constants import (
    HOLM_ALPHAS,
    SCORE_COLUMNS,
    WILCOXON_EXACT_MAX_N,
    WILCOXON_MIN_N,
)
from prosoref.common.enum import Preference
from prosoref.common.utils import (
    build_model,
    content_lines,
    format_float,
    parse_float,
    read_text,
    write_json,
    write_text,
)
from prosoref.core.exceptions import (
    DataError,
    DegenerateSample,
    EmptyScores,
    InvalidP,
    LengthMismatch,
    TooFewSamples,
    ZeroVariance,
)
from prosoref.schemas.listening import (
    HolmResult,
    ListeningReport,
    MushraRating,
    MushraScores,
    PairComparison,
    PreferenceResult,
    Quartiles,
)

logger = logging.getLogger("prosoref.listening")

QUARTILE_HEADER = ("system", "min", "q1", "median", "q3", "max")


def _paired(x, y) -> np.ndarray:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"paired samples differ in shape: {x.shape} vs {y.shape}")
    return x - y


def _system_scores(scores: MushraScores, system: str) -> np.ndarray:
    return np.array([r.score for r in scores.ratings if r.system == system], dtype=np.float64)


def _alpha_key(alpha: float) -> str:
    return f"{alpha:g}"


class ListeningService:
    @staticmethod
    def mushra_medians(scores: MushraScores) -> dict[str, float]:
        if not scores.ratings:
            raise EmptyScores("score set has no ratings")
        return {
            system: float(np.median(_system_scores(scores, system))) for system in scores.systems
        }

    @staticmethod
    def mushra_quartiles(scores: MushraScores) -> dict[str, Quartiles]:
        """Box-plot figures per system (linear-interpolated percentiles)."""
        if not scores.ratings:
            raise EmptyScores("score set has no ratings")
        quartiles = {}
        for system in scores.systems:
            q = np.percentile(_system_scores(scores, system), [0, 25, 50, 75, 100])
            quartiles[system] = Quartiles(
                minimum=q[0], q1=q[1], median=q[2], q3=q[3], maximum=q[4]
            )
        return quartiles

    @staticmethod
    def paired_samples(scores: MushraScores, a: str, b: str) -> tuple[np.ndarray, np.ndarray]:
        """Scores of ``a`` and ``b`` paired by rating block, in sorted block order."""
        by_block: dict[tuple[str, str, str], dict[str, float]] = {}
        for rating in scores.ratings:
            by_block.setdefault(rating.block, {})[rating.system] = rating.score
        blocks = sorted(by_block)
        return (
            np.array([by_block[k][a] for k in blocks], dtype=np.float64),
            np.array([by_block[k][b] for k in blocks], dtype=np.float64),
        )

    @staticmethod
    def wilcoxon_signed_rank(x, y, exact_max_n: int = WILCOXON_EXACT_MAX_N) -> float:
        """Two-sided p; zero differences dropped, exact enumeration up to ``exact_max_n``."""
        d = _paired(x, y)
        d = d[d != 0.0]
        n = d.size
        if n < WILCOXON_MIN_N:
            raise DegenerateSample(
                f"{n} non-zero differences; the signed-rank test needs at least {WILCOXON_MIN_N}"
            )

        ranks = rankdata(np.abs(d))
        if n <= exact_max_n:
            # midranks are multiples of 1/2, so doubled ranks are exact integers
            doubled = np.rint(2.0 * ranks).astype(np.int64)
            observed = int(doubled[d > 0].sum())
            signs = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
            sums = signs @ doubled
            lower = np.count_nonzero(sums <= observed) / sums.size
            upper = np.count_nonzero(sums >= observed) / sums.size
            return float(min(1.0, 2.0 * min(lower, upper)))

        w_plus = float(ranks[d > 0].sum())
        _, ties = np.unique(ranks, return_counts=True)
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(ties**3 - ties)) / 48.0
        if var <= 0.0:
            raise DegenerateSample("signed-rank statistic has zero variance")
        z = (w_plus - mean) / math.sqrt(var)
        return float(min(1.0, 2.0 * norm.sf(abs(z))))

    @staticmethod
    def t_statistic(x, y) -> tuple[float, int]:
        d = _paired(x, y)
        n = d.size
        if n < 2:
            raise TooFewSamples(f"paired t-test needs at least 2 pairs, got {n}")
        sd = float(np.std(d, ddof=1))
        if sd == 0.0:
            raise ZeroVariance("paired differences have zero variance")
        return float(np.mean(d)) / (sd / math.sqrt(n)), n - 1

    @staticmethod
    def paired_t(x, y) -> float:
        t, df = ListeningService.t_statistic(x, y)
        # two-sided Student tail through the regularized incomplete beta
        return float(betainc(df / 2.0, 0.5, df / (df + t * t)))

    @staticmethod
    def holm_correction(pvals: Sequence[float], alpha: float = 0.05) -> HolmResult:
        p = np.asarray(pvals, dtype=np.float64)
        if p.ndim != 1 or not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise InvalidP(f"p-values must lie in [0, 1], got {list(pvals)}")
        if not 0.0 < alpha < 1.0:
            raise InvalidP(f"alpha must lie in (0, 1), got {alpha}")

        m = p.size
        order = np.argsort(p, kind="stable")
        reject = np.zeros(m, dtype=bool)
        adjusted = np.zeros(m)

        running, stopped = 0.0, False
        for k, index in enumerate(order):
            if not stopped and p[index] <= alpha / (m - k):
                reject[index] = True
            else:
                stopped = True
            running = max(running, min(1.0, (m - k) * p[index]))
            adjusted[index] = running

        return HolmResult(
            alpha=alpha,
            reject=tuple(bool(r) for r in reject),
            adjusted=tuple(float(a) for a in adjusted),
        )

    @staticmethod
    def pairwise_report(
        scores: MushraScores,
        alphas: Sequence[float] = HOLM_ALPHAS,
        condition: Optional[str] = None,
    ) -> ListeningReport:
        """Medians plus both tests for every system pair, Holm-corrected per test family."""
        medians = ListeningService.mushra_medians(scores)

        rows = []
        for a, b in combinations(scores.systems, 2):
            x, y = ListeningService.paired_samples(scores, a, b)
            row = {"system_a": a, "system_b": b, "n_pairs": int(x.size)}
            try:
                row["wilcoxon_p"] = ListeningService.wilcoxon_signed_rank(x, y)
            except DataError as e:
                row["wilcoxon_error"] = str(e)
            try:
                row["t_p"] = ListeningService.paired_t(x, y)
            except DataError as e:
                row["t_error"] = str(e)
            rows.append(row)

        for test in ("wilcoxon", "t"):
            defined = [row for row in rows if f"{test}_p" in row]
            if not defined:
                continue
            pvals = [row[f"{test}_p"] for row in defined]
            for alpha in alphas:
                holm = ListeningService.holm_correction(pvals, alpha)
                for row, reject, adjusted in zip(defined, holm.reject, holm.adjusted):
                    row.setdefault(f"{test}_reject", {})[_alpha_key(alpha)] = reject
                    row[f"{test}_adjusted"] = adjusted

        sub_reports = ()
        if condition is None and scores.conditions:
            sub_reports = tuple(
                ListeningService.pairwise_report(scores.for_condition(c), alphas, condition=c)
                for c in scores.conditions
            )

        logger.debug("%d systems, %d comparisons", len(scores.systems), len(rows))
        return ListeningReport(
            condition=condition,
            medians=medians,
            comparisons=tuple(PairComparison(**row) for row in rows),
            conditions=sub_reports,
        )

    @staticmethod
    def preference_test(choices: Iterable[Preference | str]) -> PreferenceResult:
        """Shares of A / B / no preference and a two-sided sign test over decided choices."""
        try:
            picks = [
                c if isinstance(c, Preference) else Preference(c.strip().lower())
                for c in choices
            ]
        except ValueError as e:
            raise DataError("choice must be a, b or none") from e
        n = len(picks)
        if n == 0:
            raise EmptyScores("no preference choices")
        n_a = picks.count(Preference.A)
        n_b = picks.count(Preference.B)
        if n_a + n_b == 0:
            raise DegenerateSample("every choice is 'no preference'")

        return PreferenceResult(
            n=n,
            a_pct=100.0 * n_a / n,
            b_pct=100.0 * n_b / n,
            none_pct=100.0 * (n - n_a - n_b) / n,
            p_value=float(binomtest(n_a, n_a + n_b, 0.5).pvalue),
        )

    @staticmethod
    def parse_scores(text: str, path: Optional[str | Path] = None) -> MushraScores:
        lines = list(content_lines(text))
        if not lines:
            raise EmptyScores("score file is empty", path=path)

        header_line, header = lines[0][0], next(csv.reader([lines[0][1]]))
        header = [cell.strip() for cell in header]
        if tuple(header[:4]) != SCORE_COLUMNS or len(header) not in (4, 5) or (
            len(header) == 5 and header[4] != "condition"
        ):
            raise DataError(
                f"expected header {','.join(SCORE_COLUMNS)}[,condition]",
                path=path,
                line=header_line,
            )

        systems: dict[str, None] = {}
        ratings = []
        for number, line in lines[1:]:
            row = [cell.strip() for cell in next(csv.reader([line]))]
            if len(row) != len(header):
                raise DataError(
                    f"expected {len(header)} columns, got {len(row)}", path=path, line=number
                )
            systems.setdefault(row[2], None)
            ratings.append(
                build_model(
                    MushraRating,
                    {
                        "listener": row[0],
                        "utterance": row[1],
                        "system": row[2],
                        "score": parse_float(row[3], path=path, line=number),
                        "condition": row[4] if len(row) == 5 else None,
                    },
                    path=path,
                    line=number,
                )
            )

        return build_model(
            MushraScores, {"systems": tuple(systems), "ratings": tuple(ratings)}, path=path
        )

    @staticmethod
    def read_scores(path: str | Path) -> MushraScores:
        return ListeningService.parse_scores(read_text(path), path=path)

    @staticmethod
    def parse_preferences(text: str, path: Optional[str | Path] = None) -> list[Preference]:
        """CSV with a ``choice`` column holding a, b or none."""
        lines = list(content_lines(text))
        if not lines:
            raise EmptyScores("preference file is empty", path=path)
        header = [cell.strip() for cell in next(csv.reader([lines[0][1]]))]
        if "choice" not in header:
            raise DataError("header needs a 'choice' column", path=path, line=lines[0][0])
        column = header.index("choice")

        picks = []
        for number, line in lines[1:]:
            row = next(csv.reader([line]))
            try:
                picks.append(Preference(row[column].strip().lower()))
            except (IndexError, ValueError):
                raise DataError("choice must be a, b or none", path=path, line=number)
        return picks

    @staticmethod
    def read_preferences(path: str | Path) -> list[Preference]:
        return ListeningService.parse_preferences(read_text(path), path=path)

    @staticmethod
    def format_quartiles(quartiles: dict[str, Quartiles]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(QUARTILE_HEADER)
        for system, q in quartiles.items():
            writer.writerow(
                [system, *(format_float(v) for v in (q.minimum, q.q1, q.median, q.q3, q.maximum))]
            )
        return buffer.getvalue()

    @staticmethod
    def write_quartiles(quartiles: dict[str, Quartiles], path: str | Path) -> Path:
        return write_text(path, ListeningService.format_quartiles(quartiles))

    @staticmethod
    def write_report(report: ListeningReport | PreferenceResult, path: str | Path) -> Path:
        return write_json(path, report.model_dump(mode="json"))
