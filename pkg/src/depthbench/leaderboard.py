"""Challenge final score, normalization-constant fitting and leaderboard ranking.

The ranking quantity is ``2^(-20 * si-RMSE) / (C * runtime)`` with runtime in
seconds. The organizers never published C; fitting it per published row gives
an essentially constant value (spread below 1%) for nine of the ten published
submissions, so the geometric mean over those rows ships as the default. It
lands suspiciously close to 1/640. The remaining row (team CFL2) is
irreconcilable with the formula by a factor of about 3.3 and is kept in the
fixture as a known inconsistency rather than silently corrected.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

EXPONENT_COEFFICIENT = 20.0

# Geometric mean of the implied constants of the nine mutually consistent
# published rows; see fit_normalization_constant and scripts/reproduce_scoring.py.
DEFAULT_NORMALIZATION = 0.0015641047616864264


class NonPositiveRuntimeError(ValueError):
    """Runtime must be strictly positive."""


class EmptyInputError(ValueError):
    """At least one record is required."""


@dataclass(frozen=True)
class ScoringConfig:
    exponent_coefficient: float = EXPONENT_COEFFICIENT
    normalization: float = DEFAULT_NORMALIZATION  # the constant C, runtime in seconds
    runtime_unit: str = "s"

    def __post_init__(self):
        if not self.normalization > 0:
            raise ValueError("normalization constant must be positive")
        if not self.exponent_coefficient > 0:
            raise ValueError("exponent coefficient must be positive")


@dataclass(frozen=True)
class SubmissionRecord:
    team: str
    si_rmse: float
    rmse: float
    log10: float
    rel: float
    runtime_s: float
    model_size_mb: float
    published_score: float | None = None


@dataclass(frozen=True)
class LeaderboardRow:
    rank: int
    record: SubmissionRecord
    final_score: float


# Published results of the MAI 2021 monocular depth challenge (runtimes were
# reported in milliseconds; stored here in seconds). CFL2's printed score does
# not follow from the formula and is flagged, never corrected.
MAI2021_RESULTS: tuple[SubmissionRecord, ...] = (
    SubmissionRecord("Tencent GY-Lab", 0.2836, 3.56, 0.1121, 0.2690, 0.097, 3.4, 129.41),
    SubmissionRecord("SMART", 0.2602, 3.25, 0.1043, 0.2678, 1.197, 15.0, 14.51),
    SubmissionRecord("Airia-Team1", 0.2408, 3.00, 0.0904, 0.2389, 1.933, 64.9, 11.75),
    SubmissionRecord("YTL", 0.2902, 3.91, 0.1551, 0.4700, 1.275, 56.2, 8.98),
    SubmissionRecord("CFL2", 0.2761, 9.68, 2.3393, 0.9951, 0.772, 9.6, 5.5),
    SubmissionRecord("HIT-AIIA", 0.2332, 2.72, 0.0831, 0.2189, 6.146, 56.0, 4.11),
    SubmissionRecord("weichi", 0.4659, 7.56, 0.4493, 0.5992, 0.582, 0.5, 1.72),
    SubmissionRecord("MonoVision Palace", 0.3543, 4.16, 0.1441, 0.3862, 3.466, 15.3, 1.36),
    SubmissionRecord("3dv oppo", 0.2678, 5.96, 0.3300, 0.5152, 26.494, 187.0, 0.59),
    SubmissionRecord("MegaUe", 0.3737, 9.08, 0.9605, 0.8573, 9.392, 118.0, 0.38),
)

KNOWN_INCONSISTENT_TEAMS = frozenset({"CFL2"})


def consistent_results() -> tuple[SubmissionRecord, ...]:
    return tuple(r for r in MAI2021_RESULTS if r.team not in KNOWN_INCONSISTENT_TEAMS)


def final_score(si_rmse: float, runtime_s: float, config: ScoringConfig | None = None) -> float:
    """2^(-k * si_rmse) / (C * runtime_s)."""
    config = config or ScoringConfig()
    if not runtime_s > 0:
        raise NonPositiveRuntimeError(f"runtime must be positive, got {runtime_s}")
    return 2.0 ** (-config.exponent_coefficient * si_rmse) / (config.normalization * runtime_s)


def implied_normalization(record: SubmissionRecord, exponent_coefficient: float = EXPONENT_COEFFICIENT) -> float:
    """Solve the score formula for C using a row's published score."""
    if record.published_score is None:
        raise ValueError(f"{record.team}: no published score to invert")
    if not record.runtime_s > 0:
        raise NonPositiveRuntimeError(f"{record.team}: runtime must be positive")
    return 2.0 ** (-exponent_coefficient * record.si_rmse) / (
        record.published_score * record.runtime_s
    )


def fit_normalization_constant(
    records, exponent_coefficient: float = EXPONENT_COEFFICIENT
) -> tuple[float, float]:
    """Fit C from rows with published scores.

    Returns the geometric mean of the per-row implied constants (the formula
    is multiplicative in C) and the maximum relative deviation of any row
    from that mean.
    """
    records = list(records)
    if not records:
        raise EmptyInputError("need at least one record with a published score")
    implied = [implied_normalization(r, exponent_coefficient) for r in records]
    fitted = math.exp(math.fsum(math.log(c) for c in implied) / len(implied))
    spread = max(abs(c - fitted) / fitted for c in implied)
    return fitted, spread


def flag_inconsistent_rows(
    records, factor: float = 2.0, exponent_coefficient: float = EXPONENT_COEFFICIENT
) -> list[tuple[SubmissionRecord, float, float]]:
    """Rows whose implied C deviates from the group's geometric mean by > factor.

    Returns (record, implied_c, deviation_ratio) triples; deviation_ratio is
    max(implied/fitted, fitted/implied).
    """
    records = list(records)
    fitted, _ = fit_normalization_constant(records, exponent_coefficient)
    flagged = []
    for record in records:
        implied = implied_normalization(record, exponent_coefficient)
        ratio = max(implied / fitted, fitted / implied)
        if ratio > factor:
            flagged.append((record, implied, ratio))
    return flagged


def rank(records, config: ScoringConfig | None = None) -> list[LeaderboardRow]:
    """Score and sort records; ties break on lower runtime, then team name."""
    records = list(records)
    if not records:
        raise EmptyInputError("need at least one record to rank")
    config = config or ScoringConfig()
    scored = [(final_score(r.si_rmse, r.runtime_s, config), r) for r in records]
    scored.sort(key=lambda pair: (-pair[0], pair[1].runtime_s, pair[1].team))
    return [
        LeaderboardRow(rank=i, record=r, final_score=s)
        for i, (s, r) in enumerate(scored, start=1)
    ]


_COLUMNS = (
    "rank", "team", "model_size_mb", "si_rmse", "rmse", "log10", "rel",
    "runtime_ms", "final_score",
)


def _row_values(row: LeaderboardRow) -> dict:
    r = row.record
    return {
        "rank": row.rank,
        "team": r.team,
        "model_size_mb": r.model_size_mb,
        "si_rmse": r.si_rmse,
        "rmse": r.rmse,
        "log10": r.log10,
        "rel": r.rel,
        "runtime_ms": r.runtime_s * 1000.0,
        "final_score": row.final_score,
    }


def render_report(rows: list[LeaderboardRow], fmt: str = "text") -> bytes:
    """Render ranked rows as an aligned text table, CSV, or JSON.

    The text table shows si-RMSE with 4 decimals and the final score with 2;
    CSV and JSON carry the exact unrounded values.
    """
    if fmt == "json":
        return json.dumps([_row_values(row) for row in rows], indent=2).encode()
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(_row_values(row))
        return buf.getvalue().encode()
    if fmt == "text":
        header = ("#", "Team", "Size MB", "si-RMSE", "RMSE", "LOG10", "REL",
                  "Runtime ms", "Score")
        table = [header]
        for row in rows:
            r = row.record
            table.append((
                str(row.rank), r.team, f"{r.model_size_mb:.1f}", f"{r.si_rmse:.4f}",
                f"{r.rmse:.2f}", f"{r.log10:.4f}", f"{r.rel:.4f}",
                f"{r.runtime_s * 1000.0:.0f}", f"{row.final_score:.2f}",
            ))
        widths = [max(len(line[i]) for line in table) for i in range(len(header))]
        rendered = []
        for line in table:
            cells = [c.ljust(w) if i == 1 else c.rjust(w) for i, (c, w) in enumerate(zip(line, widths))]
            rendered.append("  ".join(cells).rstrip())
        return ("\n".join(rendered) + "\n").encode()
    raise ValueError(f"unknown format {fmt!r}")
