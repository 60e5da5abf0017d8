"""Ranked-retrieval metrics: PR curves, average precision, mAP, top-N.

AP follows the sum-of-precision-times-recall-change definition with the
recall delta nonzero only at ranks holding a relevant item, which makes it
the mean of the prefix precisions at the relevant ranks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import EmptyInput, MissingCommonCategory, NoRelevantItems
from .features import fmt_float

# the six material categories every dataset shares, in reporting order
COMMON_CATEGORIES = ("fabric", "glass", "metal", "paper", "plastic", "wood")

DEFAULT_TOP_N = 36


@dataclass(frozen=True)
class ScoredImage:
    image_id: str
    score: float
    relevant: bool


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall at every cutoff k = 1..n of a ranked list."""

    points: tuple[tuple[int, float, float], ...]


@dataclass(frozen=True)
class APReport:
    ap: float
    curve: PRCurve
    ranked: tuple[ScoredImage, ...]


def rank(items: Sequence[ScoredImage]) -> list[ScoredImage]:
    """Sort by score descending; ties broken by image_id ascending."""
    return sorted(items, key=lambda item: (-item.score, item.image_id))


def average_precision(ranked: Sequence[ScoredImage]) -> APReport:
    """AP over an already rank-ordered list; needs at least one relevant item."""
    total_relevant = sum(1 for item in ranked if item.relevant)
    if total_relevant == 0:
        raise NoRelevantItems("ranked list holds no relevant item")
    points = []
    seen_relevant = 0
    precision_sum = 0.0
    for k, item in enumerate(ranked, start=1):
        if item.relevant:
            seen_relevant += 1
            # recall rises by 1/total_relevant exactly here, so the AP sum
            # is the mean of the prefix precisions at the relevant ranks
            precision_sum += seen_relevant / k
        points.append((k, seen_relevant / k, seen_relevant / total_relevant))
    ap = precision_sum / total_relevant
    return APReport(ap=ap, curve=PRCurve(points=tuple(points)), ranked=tuple(ranked))


def top_n(ranked: Sequence[ScoredImage], n: int = DEFAULT_TOP_N) -> list[ScoredImage]:
    """First min(n, len) items of a rank-ordered list."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return list(ranked[:n])


def mean_ap(per_category: Sequence[tuple[str, float]]) -> float:
    """Unweighted arithmetic mean of per-category AP values."""
    if not per_category:
        raise EmptyInput("mean_ap needs at least one category")
    for name, ap in per_category:
        if not 0.0 <= ap <= 1.0:
            raise ValueError(f"ap for {name!r} outside [0, 1]: {ap}")
    return sum(ap for _, ap in per_category) / len(per_category)


def common_ground_filter(
    results: Iterable[tuple[str, float]]
) -> list[tuple[str, float]]:
    """Keep exactly the six shared material categories, in canonical order."""
    by_name: dict[str, float] = {}
    for name, ap in results:
        if name in COMMON_CATEGORIES and name not in by_name:
            by_name[name] = ap
    missing = [name for name in COMMON_CATEGORIES if name not in by_name]
    if missing:
        raise MissingCommonCategory(missing)
    return [(name, by_name[name]) for name in COMMON_CATEGORIES]


def pr_curve_csv(curve: PRCurve) -> str:
    lines = ["k,precision,recall"]
    for k, precision, recall in curve.points:
        lines.append(f"{k},{fmt_float(precision)},{fmt_float(recall)}")
    return "\n".join(lines) + "\n"


def ap_summary_csv(per_category: Sequence[tuple[str, float]]) -> str:
    lines = ["category,ap"]
    for name, ap in per_category:
        lines.append(f"{name},{fmt_float(ap)}")
    return "\n".join(lines) + "\n"
