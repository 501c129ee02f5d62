"""Paired significance testing and robust summaries across seeds."""

from __future__ import annotations

import itertools
from typing import Any

import numpy as np
from scipy.stats import rankdata, wilcoxon

from neuropareto.errors import DomainError

ALPHA = 0.05
EXACT_MAX_PAIRS = 12


def wilcoxon_signed_rank(a: Any, b: Any) -> float:
    """Two-sided paired signed-rank p-value.

    Exact enumeration of all sign assignments up to 12 nonzero pairs, with
    zero differences dropped and tied magnitudes given average ranks. With no
    nonzero difference there is no effect and p is 1.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("paired samples must be 1-D and of equal length")
    diff = x - y
    diff = diff[diff != 0.0]
    n = diff.size
    if n == 0:
        return 1.0
    if n > EXACT_MAX_PAIRS:
        return float(wilcoxon(diff, zero_method="wilcox", alternative="two-sided").pvalue)

    ranks = rankdata(np.abs(diff))
    observed = float(ranks[diff > 0].sum())
    total = float(ranks.sum())
    signs = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    w_plus = signs @ ranks
    centre = total / 2.0
    extreme = np.abs(w_plus - centre) >= abs(observed - centre) - 1e-9
    return float(min(1.0, extreme.mean()))


def summarize(values: Any) -> dict[str, float]:
    """Median and interquartile range."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DomainError("cannot summarize an empty sample")
    q1, median, q3 = np.percentile(v, [25.0, 50.0, 75.0])
    return {
        "median": float(median),
        "q1": float(q1),
        "q3": float(q3),
        "iqr": float(q3 - q1),
        "n": float(v.size),
    }
