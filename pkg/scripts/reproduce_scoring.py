#!/usr/bin/env python3
"""Reconstruct the published challenge leaderboard from the score formula.

Fits the unpublished normalization constant C from the published
(si-RMSE, runtime, score) rows, reports how tightly the rows agree, flags the
row the formula cannot explain, and prints the re-scored table next to the
published scores.
"""

import argparse

from depthbench.leaderboard import (
    MAI2021_RESULTS,
    ScoringConfig,
    consistent_results,
    fit_normalization_constant,
    flag_inconsistent_rows,
    rank,
    render_report,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--format", choices=("text", "csv", "json"), default="text")
    args = parser.parse_args()

    c_all, spread_all = fit_normalization_constant(MAI2021_RESULTS)
    c_nine, spread_nine = fit_normalization_constant(consistent_results())
    print(f"C over all 10 published rows : {c_all:.6e}  (max deviation {spread_all:.1%})")
    print(f"C over the 9 consistent rows : {c_nine:.6e}  (max deviation {spread_nine:.2%})")
    print(f"for reference, 1/640         : {1 / 640:.6e}")

    for record, implied, ratio in flag_inconsistent_rows(MAI2021_RESULTS, factor=2.0):
        print(
            f"\nflagged: {record.team} (published score {record.published_score}) implies "
            f"C = {implied:.6e}, {ratio:.2f}x off the fit; kept as-is, not corrected"
        )

    ranked = rank(MAI2021_RESULTS, ScoringConfig(normalization=c_nine))
    print()
    print(render_report(ranked, args.format).decode())

    print("computed vs published:")
    for row in ranked:
        published = row.record.published_score
        rel = abs(row.final_score - published) / published
        marker = "  <-- inconsistent" if rel > 0.05 else ""
        print(
            f"  {row.record.team:<18} computed {row.final_score:8.2f}   "
            f"published {published:7.2f}   ({rel:.2%}){marker}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
