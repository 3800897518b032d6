"""Correlation, error and retrieval metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata


class DegenerateInputError(ValueError):
    """A correlation was requested on a constant vector."""


@dataclass(frozen=True)
class RankedResult:
    query_label: object
    ranked_labels: tuple

    def __post_init__(self):
        if len(self.ranked_labels) == 0:
            raise ValueError("ranking must be non-empty")


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least two values")
    return x, y


def pearson(x, y) -> float:
    x, y = _pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = xc @ xc
    syy = yc @ yc
    if sxx == 0 or syy == 0:
        raise DegenerateInputError("correlation undefined for a constant vector")
    # sqrt(a * a) == a exactly, so identical inputs give exactly 1.
    return float(np.clip((xc @ yc) / np.sqrt(sxx * syy), -1.0, 1.0))


def spearman(x, y) -> float:
    """Pearson correlation of average (tie-aware) ranks."""
    x, y = _pair(x, y)
    return pearson(rankdata(x), rankdata(y))


def rmse(estimated, subjective) -> float:
    x, y = _pair(estimated, subjective)
    return float(np.sqrt(np.mean((x - y) ** 2)))


def outlier_ratio(estimated, subjective, subjective_std=None) -> float:
    """Fraction of items whose error exceeds twice the subjective std.

    Without per-item stds the threshold is ``2 * rmse``.
    """
    x, y = _pair(estimated, subjective)
    err = np.abs(x - y)
    if subjective_std is None:
        thresh = 2.0 * rmse(x, y)
    else:
        thresh = 2.0 * np.asarray(subjective_std, dtype=np.float64).ravel()
        if thresh.shape != err.shape:
            raise ValueError("subjective_std length mismatch")
    return float(np.mean(err > thresh))


def _relevance(r: RankedResult) -> np.ndarray:
    rel = np.array([lab == r.query_label for lab in r.ranked_labels], dtype=bool)
    if not rel.any():
        raise ValueError(f"query class {r.query_label!r} has no relevant items in the corpus")
    return rel


def precision_at_1(results: Sequence[RankedResult]) -> float:
    return float(np.mean([_relevance(r)[0] for r in results]))


def mrr(results: Sequence[RankedResult]) -> float:
    return float(np.mean([1.0 / (np.argmax(_relevance(r)) + 1) for r in results]))


def average_precision(r: RankedResult) -> float:
    rel = _relevance(r)
    hits = np.cumsum(rel)
    ranks = np.arange(1, rel.size + 1)
    return float(np.sum(hits[rel] / ranks[rel]) / rel.sum())


def mean_average_precision(results: Sequence[RankedResult]) -> float:
    return float(np.mean([average_precision(r) for r in results]))


# Short alias used in tables.
map_score = mean_average_precision


def retrieval_summary(results: Sequence[RankedResult]) -> dict:
    return {"P@1": precision_at_1(results), "MRR": mrr(results), "MAP": mean_average_precision(results)}


def iqa_summary(estimated, subjective, subjective_std=None) -> dict:
    return {
        "RMSE": rmse(estimated, subjective),
        "OR": outlier_ratio(estimated, subjective, subjective_std),
        "Pearson": pearson(estimated, subjective),
        "Spearman": spearman(estimated, subjective),
    }
