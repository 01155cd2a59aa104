"""Paired nonparametric tests, FDR correction, effect sizes, and trend test.

All tests are pure functions. Exact null distributions are computed by
dynamic programming over sign assignments (signed-rank test) or by convolving
per-subject rank-permutation distributions (trend test); both switch to the
usual normal approximations above fixed, documented thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import permutations
from typing import Sequence

import numpy as np
from scipy.stats import norm, rankdata

from .errors import StatsError

#: Largest n for which the signed-rank null is enumerated exactly.
WILCOXON_EXACT_MAX_N = 25
#: Exact trend-test p-values whenever n_subjects * k! stays within this budget.
PAGE_EXACT_BUDGET = 10**6

METHOD_EXACT = "exact_permutation"
METHOD_NORMAL = "normal_approx"


@dataclass(frozen=True)
class TestReport:
    test_name: str
    n: int
    statistic: float
    p_value: float
    q_value: float | None = None
    effect_size: float | None = None
    significance_code: str = "n.s."
    method: str = METHOD_EXACT
    n_zeros_dropped: int = 0


@dataclass(frozen=True)
class OrderedTestReport:
    L_statistic: float
    n_subjects: int
    k_treatments: int
    p_value: float
    method: str


def significance_code(q: float) -> str:
    if q < 0.001:
        return "***"
    if q < 0.01:
        return "**"
    if q < 0.05:
        return "*"
    return "n.s."


def _signed_rank_cdf_at(ranks2: np.ndarray, w2: int) -> float:
    """P(sum of an independent-sign subset of ranks <= w2/2), doubled ranks.

    Exact subset-sum count over all 2^n sign assignments; counts stay below
    2^53 for n <= WILCOXON_EXACT_MAX_N so int64 arithmetic is exact.
    """
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in ranks2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    w2 = min(w2, total)
    return float(counts[: w2 + 1].sum()) / float(2 ** len(ranks2))


def wilcoxon_signed_rank(differences: Sequence[float]) -> TestReport:
    """Two-sided paired signed-rank test on a vector of differences.

    Zero differences are dropped (their count is reported). The statistic is
    ``min(W+, W-)`` over average ranks of absolute differences. Exact p by
    full-enumeration DP for n <= 25, else normal approximation with tie and
    continuity corrections.
    """
    x = np.asarray(differences, dtype=float)
    if x.ndim != 1:
        raise StatsError("differences must be a 1-d vector")
    nonzero = x[x != 0.0]
    n_zeros = int(x.size - nonzero.size)
    n = int(nonzero.size)
    if n == 0:
        raise StatsError("degenerate: no nonzero pairs")
    ranks = rankdata(np.abs(nonzero))
    w_plus = float(ranks[nonzero > 0].sum())
    w_minus = float(ranks[nonzero < 0].sum())
    statistic = min(w_plus, w_minus)

    if n <= WILCOXON_EXACT_MAX_N:
        ranks2 = np.rint(2.0 * ranks).astype(np.int64)
        w2 = int(np.rint(2.0 * statistic))
        p = min(1.0, 2.0 * _signed_rank_cdf_at(ranks2, w2))
        method = METHOD_EXACT
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        tie_term = float(((tie_counts**3 - tie_counts) / 48.0).sum())
        var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
        if var <= 0.0:
            raise StatsError("degenerate: zero variance in signed-rank null")
        z = (statistic - mean + 0.5) / math.sqrt(var)
        p = min(1.0, 2.0 * float(norm.cdf(z)))
        method = METHOD_NORMAL
    return TestReport(
        test_name="wilcoxon_signed_rank",
        n=n,
        statistic=statistic,
        p_value=p,
        significance_code=significance_code(p),
        method=method,
        n_zeros_dropped=n_zeros,
    )


def cohens_dz(differences: Sequence[float]) -> float:
    """Paired effect size: mean difference over its sample standard deviation."""
    x = np.asarray(differences, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise StatsError("paired effect size requires at least two differences")
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        raise StatsError("paired effect size undefined for zero variance")
    return float(x.mean()) / sd


def bh_fdr(p_values: Sequence[float]) -> np.ndarray:
    """Step-up FDR adjustment; returns q-values in input order."""
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise StatsError("FDR adjustment requires a non-empty 1-d vector")
    if np.any((p < 0.0) | (p > 1.0)) or np.any(np.isnan(p)):
        raise StatsError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    q_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    q_sorted = np.minimum(q_sorted, 1.0)
    q = np.empty(m, dtype=float)
    q[order] = q_sorted
    return q


def apply_fdr(reports: Sequence[TestReport]) -> list[TestReport]:
    """Adjust one family of test reports; fills q-values and star codes."""
    if not reports:
        return []
    q = bh_fdr([r.p_value for r in reports])
    return [
        replace(r, q_value=float(qi), significance_code=significance_code(float(qi)))
        for r, qi in zip(reports, q)
    ]


def relative_delta(before: float, after: float) -> float:
    """Percent change from ``before`` to ``after``."""
    if before == 0.0:
        raise StatsError("relative delta undefined for a zero baseline")
    return 100.0 * (after - before) / before


def page_l_bounds(k: int) -> tuple[int, int]:
    """Range of a single subject's contribution to the trend statistic."""
    return k * (k + 1) * (k + 2) // 6, k * (k + 1) * (2 * k + 1) // 6


def _row_pmf(ranks2: tuple[int, ...], coef: np.ndarray) -> dict[int, int]:
    """Counts of the doubled per-subject statistic over all k! assignments."""
    counts: dict[int, int] = {}
    for perm in permutations(ranks2):
        value = int(np.dot(coef, perm))
        counts[value] = counts.get(value, 0) + 1
    return counts


def _pmf_to_array(counts: dict[int, int]) -> tuple[np.ndarray, int]:
    lo, hi = min(counts), max(counts)
    arr = np.zeros(hi - lo + 1, dtype=float)
    total = sum(counts.values())
    for value, count in counts.items():
        arr[value - lo] = count / total
    return arr, lo


def _convolve(a: tuple[np.ndarray, int], b: tuple[np.ndarray, int]) -> tuple[np.ndarray, int]:
    return np.convolve(a[0], b[0]), a[1] + b[1]


def _pmf_power(base: tuple[np.ndarray, int], exponent: int) -> tuple[np.ndarray, int]:
    result: tuple[np.ndarray, int] | None = None
    while exponent > 0:
        if exponent & 1:
            result = base if result is None else _convolve(result, base)
        exponent >>= 1
        if exponent:
            base = _convolve(base, base)
    assert result is not None
    return result


def page_test(
    matrix: Sequence[Sequence[float]] | np.ndarray,
    predicted_order: Sequence[int] | None = None,
    exact_budget: int = PAGE_EXACT_BUDGET,
) -> OrderedTestReport:
    """Rank trend test for a pre-specified ordering of k >= 3 related treatments.

    ``matrix`` is subjects x treatments; ``predicted_order`` lists column
    indices from hypothesized-largest to hypothesized-smallest (default: the
    given column order). Within each subject, values are ranked with average
    ties; the statistic is the coefficient-weighted sum of rank sums, where the
    hypothesized-smallest treatment has coefficient 1. One-sided: large values
    support the ordering. Exact p while ``n_subjects * k! <= exact_budget``
    (per-subject permutation distributions convolved across subjects), else
    normal approximation with mean ``N k (k+1)^2 / 4`` and variance
    ``N k^2 (k+1) (k^2-1) / 144``.
    """
    data = np.asarray(matrix, dtype=float)
    if data.ndim != 2:
        raise StatsError("trend test requires a 2-d subjects x treatments matrix")
    n_subjects, k = data.shape
    if k < 3:
        raise StatsError("trend test requires at least three treatments")
    if n_subjects < 1:
        raise StatsError("trend test requires at least one subject")
    if np.isnan(data).any():
        raise StatsError("trend test requires a complete matrix (missing cell)")
    if predicted_order is None:
        predicted_order = list(range(k))
    if sorted(predicted_order) != list(range(k)):
        raise StatsError("predicted_order must be a permutation of the column indices")
    coef = np.empty(k, dtype=np.int64)
    for position, column in enumerate(predicted_order):
        coef[column] = k - position

    ranks = rankdata(data, axis=1)
    l_stat = float((ranks * coef).sum())

    if n_subjects * math.factorial(k) <= exact_budget:
        ranks2 = np.rint(2.0 * ranks).astype(np.int64)
        groups: dict[tuple[int, ...], int] = {}
        for row in ranks2:
            key = tuple(sorted(row))
            groups[key] = groups.get(key, 0) + 1
        combined: tuple[np.ndarray, int] | None = None
        for key, count in sorted(groups.items()):
            pmf = _pmf_to_array(_row_pmf(key, coef))
            powered = _pmf_power(pmf, count)
            combined = powered if combined is None else _convolve(combined, powered)
        assert combined is not None
        arr, lo = combined
        threshold = int(np.rint(2.0 * l_stat)) - lo
        threshold = max(threshold, 0)
        p = float(arr[threshold:].sum()) if threshold < arr.size else 0.0
        p = min(1.0, max(0.0, p))
        method = METHOD_EXACT
    else:
        mean = n_subjects * k * (k + 1) ** 2 / 4.0
        var = n_subjects * k**2 * (k + 1) * (k**2 - 1) / 144.0
        z = (l_stat - mean) / math.sqrt(var)
        p = float(norm.sf(z))
        method = METHOD_NORMAL
    return OrderedTestReport(
        L_statistic=l_stat,
        n_subjects=n_subjects,
        k_treatments=k,
        p_value=p,
        method=method,
    )


def page_normal_moments(n_subjects: int, k: int) -> tuple[float, float]:
    """Null mean and variance of the trend statistic."""
    mean = n_subjects * k * (k + 1) ** 2 / 4.0
    var = n_subjects * k**2 * (k + 1) * (k**2 - 1) / 144.0
    return mean, var
