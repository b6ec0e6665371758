"""Held-out ranking evaluation: precision-recall curves and precision at N.

Predictions are labeled by membership in a held-out fact set, sorted by
score with a lexicographic tie-break so curves are identical across runs
and platforms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError
from .graph import DEFAULT_NA_NAME
from .merge import Candidate, Fact, Pair


@dataclass(frozen=True)
class RankedPrediction:
    candidate: Candidate
    score: float
    label: bool


def label_against_kb(
    predictions: Iterable[tuple[Candidate, float]],
    holdout_kb_facts: Iterable[Fact],
    na_name: str = DEFAULT_NA_NAME,
    exclude_facts: Iterable[Fact] = (),
) -> list[RankedPrediction]:
    """Sort predictions and mark the ones present in the held-out KB.

    Entity pairs are ordered, so a reversed pair never matches.  NA
    candidates are dropped, as are candidates listed in ``exclude_facts``
    (typically the training KB: known facts are not new discoveries).
    """
    truth = set(holdout_kb_facts)
    known = set(exclude_facts)
    ranked = [
        RankedPrediction(cand, score, cand.fact in truth)
        for cand, score in predictions
        if cand.relation != na_name and cand.fact not in known
    ]
    ranked.sort(key=lambda p: (-p.score, p.candidate.head, p.candidate.relation, p.candidate.tail))
    return ranked


def pr_curve(
    ranked: Sequence[RankedPrediction], total_positives: int
) -> list[tuple[float, float]]:
    """(recall, precision) per ranked prefix."""
    if total_positives < 1:
        raise DataError("total_positives must be >= 1")
    points = []
    tp = 0
    for k, pred in enumerate(ranked, 1):
        tp += int(pred.label)
        points.append((tp / total_positives, tp / k))
    return points


def precision_at_n(ranked: Sequence[RankedPrediction], n_values: Sequence[int]) -> dict[int, float]:
    out = {}
    for n in n_values:
        if n < 1 or n > len(ranked):
            raise DataError(f"P@{n} undefined for a list of {len(ranked)} predictions")
        out[n] = sum(1 for p in ranked[:n] if p.label) / n
    return out


def reachable_positives(holdout_kb_facts: Iterable[Fact], corpus_pairs: Iterable[Pair]) -> int:
    """Held-out facts whose entity pair occurs in the evaluation corpus:
    the default recall denominator.  Pass the raw holdout size instead to
    use the other convention."""
    pairs = set(corpus_pairs)
    return sum(1 for head, _, tail in set(holdout_kb_facts) if (head, tail) in pairs)


def write_pr_curve_csv(points: Sequence[tuple[float, float]], path: str | Path, *, denominator: int, convention: str) -> None:
    """Columns: k, recall, precision.  The recall denominator and its
    convention are recorded in a comment header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# recall_denominator={denominator} convention={convention}\n")
        writer = csv.writer(fh)
        writer.writerow(["k", "recall", "precision"])
        for k, (recall, precision) in enumerate(points, 1):
            writer.writerow([k, repr(recall), repr(precision)])


def write_precision_at_n_csv(values: Mapping[int, float], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "precision"])
        for n in sorted(values):
            writer.writerow([n, repr(values[n])])


def plot_pr_curves(curves: Mapping[str, Sequence[tuple[float, float]]], path: str | Path) -> None:
    """Optional SVG rendering of one or more PR curves.

    Matplotlib metadata is pinned so the file is reproducible for a given
    library version.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "relembed"}):
        fig, ax = plt.subplots(figsize=(5, 4))
        for name in sorted(curves):
            pts = curves[name]
            ax.plot([r for r, _ in pts], [p for _, p in pts], label=name, linewidth=1.2)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_ylim(0.0, 1.05)
        ax.legend(loc="best", fontsize=8)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
