"""Small statistical helpers for comparing experiment cells.

Cells share random numbers run by run, so comparisons between two cells
use paired tests over the per-run accuracies.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import stats

from collabloc.errors import InvalidArgument


def paired_greater_pvalue(a: Sequence[float], b: Sequence[float]) -> float:
    """One-sided paired t-test p-value for ``mean(a) > mean(b)``.

    Identical samples give 1.0 (no evidence either way).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or len(a) < 2:
        raise InvalidArgument("paired samples need equal length of at least two")
    d = a - b
    if np.all(d == d[0]):
        return 0.0 if d[0] > 0 else 1.0
    return float(stats.ttest_rel(a, b, alternative="greater").pvalue)


def non_decreasing(values: Sequence[float], slack: float = 0.0) -> bool:
    v = list(values)
    return all(nxt >= prev - slack for prev, nxt in zip(v, v[1:]))


def strictly_decreasing(values: Sequence[float]) -> bool:
    v = list(values)
    return all(nxt < prev for prev, nxt in zip(v, v[1:]))


def argmax_position(values: Sequence[float]) -> int:
    """Index of the largest value; the first one on ties."""
    return int(np.argmax(np.asarray(values, dtype=np.float64)))
