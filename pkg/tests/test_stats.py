import itertools
import math
import random

import numpy as np
import pytest
from scipy.stats import rankdata

from uidc.errors import StatsError
from uidc.stats import (
    METHOD_EXACT,
    METHOD_NORMAL,
    apply_fdr,
    bh_fdr,
    cohens_dz,
    page_normal_moments,
    page_test,
    relative_delta,
    significance_code,
    wilcoxon_signed_rank,
)


# --- independent oracles ------------------------------------------------------

def oracle_wilcoxon(differences):
    """Literal 2^n enumeration of sign assignments; two-sided exact p."""
    d = [x for x in differences if x != 0.0]
    n = len(d)
    ranks = rankdata([abs(x) for x in d])
    w_plus = sum(r for r, x in zip(ranks, d) if x > 0)
    w_minus = sum(r for r, x in zip(ranks, d) if x < 0)
    w_obs = min(w_plus, w_minus)
    count = 0
    for signs in itertools.product((0, 1), repeat=n):
        s = sum(r for r, bit in zip(ranks, signs) if bit)
        if s <= w_obs + 1e-9:
            count += 1
    return w_obs, min(1.0, 2.0 * count / 2**n)


def oracle_bh(p_values):
    """Step-up by definition: q_(i) = min over j >= i of p_(j) * m / j."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    q = [0.0] * m
    for rank_pos, i in enumerate(order, start=1):
        candidates = []
        for later_pos, j in enumerate(order, start=1):
            if later_pos >= rank_pos:
                candidates.append(p_values[j] * m / later_pos)
        q[i] = min(1.0, min(candidates))
    return q


def oracle_page(matrix, predicted_order):
    """Full (k!)^N enumeration via iterated outer sums of per-subject values."""
    data = np.asarray(matrix, dtype=float)
    n, k = data.shape
    coef = np.empty(k)
    for position, column in enumerate(predicted_order):
        coef[column] = k - position
    ranks = rankdata(data, axis=1)
    l_obs = float((ranks * coef).sum())
    totals = np.zeros(1)
    for row in ranks:
        row_values = np.array(
            [float(np.dot(coef, perm)) for perm in itertools.permutations(row)]
        )
        totals = (totals[:, None] + row_values[None, :]).ravel()
    p = float(np.mean(totals >= l_obs - 1e-9))
    return l_obs, p


# --- signed-rank test ---------------------------------------------------------

def test_wilcoxon_worked_example():
    report = wilcoxon_signed_rank([1, -2, 3, -4, 5])
    assert report.statistic == 6.0
    assert report.p_value == pytest.approx(0.8125, abs=1e-12)
    assert report.method == METHOD_EXACT
    assert report.n == 5


def test_wilcoxon_all_positive_n6():
    report = wilcoxon_signed_rank([0.5, 1.0, 2.0, 3.5, 4.0, 9.0])
    assert report.statistic == 0.0
    assert report.p_value == pytest.approx(2.0 / 64.0, abs=1e-12)


def test_wilcoxon_all_zero_is_error():
    with pytest.raises(StatsError, match="no nonzero pairs"):
        wilcoxon_signed_rank([0.0, 0.0, 0.0])


def test_wilcoxon_zeros_dropped_and_counted():
    report = wilcoxon_signed_rank([0.0, 1.0, -2.0, 0.0, 3.0])
    assert report.n == 3
    assert report.n_zeros_dropped == 2


def test_wilcoxon_matches_enumeration_oracle():
    rng = random.Random(31)
    for _ in range(150):
        n = rng.randint(1, 12)
        # Mix of continuous and tied magnitudes to exercise average ranks.
        diffs = [
            rng.choice([-1, 1]) * rng.choice([rng.uniform(0.1, 5.0), 1.0, 2.0])
            for _ in range(n)
        ]
        report = wilcoxon_signed_rank(diffs)
        w_oracle, p_oracle = oracle_wilcoxon(diffs)
        assert report.statistic == pytest.approx(w_oracle, abs=1e-12)
        assert report.p_value == pytest.approx(p_oracle, abs=1e-12)


def test_wilcoxon_normal_approximation_large_n():
    rng = random.Random(32)
    diffs = [rng.gauss(0.3, 1.0) for _ in range(200)]
    report = wilcoxon_signed_rank(diffs)
    assert report.method == METHOD_NORMAL
    assert 0.0 <= report.p_value <= 1.0
    # Agreement with the exact method near the boundary size.
    diffs26 = [rng.gauss(0.5, 1.0) for _ in range(26)]
    exactish = wilcoxon_signed_rank(diffs26[:25])
    assert exactish.method == METHOD_EXACT


# --- effect size ---------------------------------------------------------------

def test_cohens_dz_example():
    assert cohens_dz([1.0, 2.0, 3.0]) == 2.0


def test_cohens_dz_zero_variance_is_error():
    with pytest.raises(StatsError):
        cohens_dz([1.5, 1.5])


def test_cohens_dz_antisymmetry_and_scale():
    rng = random.Random(33)
    x = [rng.gauss(1, 2) for _ in range(20)]
    d = cohens_dz(x)
    assert cohens_dz([-v for v in x]) == pytest.approx(-d, abs=1e-12)
    assert cohens_dz([3.0 * v for v in x]) == pytest.approx(d, rel=1e-12)
    assert cohens_dz([-0.5 * v for v in x]) == pytest.approx(-d, rel=1e-12)


# --- FDR ------------------------------------------------------------------------

def test_bh_worked_example():
    assert bh_fdr([0.01, 0.02, 0.03, 0.04]) == pytest.approx([0.04] * 4, abs=1e-15)


def test_bh_single_p():
    assert bh_fdr([0.37]) == pytest.approx([0.37])


def test_bh_rejects_bad_p():
    with pytest.raises(StatsError):
        bh_fdr([0.5, 1.5])
    with pytest.raises(StatsError):
        bh_fdr([-0.1])


def test_bh_matches_oracle_on_random_families():
    rng = random.Random(34)
    for _ in range(100):
        m = rng.randint(1, 40)
        p = [rng.random() for _ in range(m)]
        assert bh_fdr(p) == pytest.approx(oracle_bh(p), abs=1e-12)


def test_bh_q_at_least_p_within_family():
    rng = random.Random(41)
    for _ in range(50):
        p = [rng.random() for _ in range(rng.randint(1, 30))]
        q = bh_fdr(p)
        assert all(qi >= pi - 1e-15 for qi, pi in zip(q, p))


def test_bh_preserves_p_ordering():
    rng = random.Random(35)
    for _ in range(50):
        p = [rng.random() for _ in range(rng.randint(2, 30))]
        q = bh_fdr(p)
        for i in range(len(p)):
            for j in range(len(p)):
                if p[i] <= p[j]:
                    assert q[i] <= q[j] + 1e-15


def test_apply_fdr_fills_codes():
    reports = [wilcoxon_signed_rank([1, 2, 3, 4, 5, 6])]
    adjusted = apply_fdr(reports)
    assert adjusted[0].q_value == pytest.approx(adjusted[0].p_value)
    assert adjusted[0].significance_code == significance_code(adjusted[0].q_value)


# --- trend test ------------------------------------------------------------------

def test_page_maximal_agreement():
    report = page_test([[4.0, 3.0, 2.0, 1.0]])
    assert report.L_statistic == 30.0
    assert report.p_value == pytest.approx(1.0 / 24.0, abs=1e-12)
    assert report.method == METHOD_EXACT


def test_page_minimal_agreement():
    report = page_test([[1.0, 2.0, 3.0, 4.0]])
    assert report.L_statistic == 20.0
    assert report.p_value == pytest.approx(1.0, abs=1e-12)


def test_page_normal_moments_k4():
    mean, var = page_normal_moments(1, 4)
    assert mean == 25.0
    assert var == pytest.approx(25.0 / 3.0, abs=1e-12)


def test_page_predicted_order_permutation():
    # Same data, column order scrambled, predicted order follows the scramble.
    data = [[4.0, 3.0, 2.0, 1.0], [8.0, 6.0, 4.0, 2.0]]
    scrambled = [[row[2], row[0], row[3], row[1]] for row in data]
    direct = page_test(data)
    reordered = page_test(scrambled, predicted_order=[1, 3, 0, 2])
    assert direct.L_statistic == reordered.L_statistic
    assert direct.p_value == pytest.approx(reordered.p_value, abs=1e-12)


def test_page_matches_enumeration_oracle():
    rng = random.Random(36)
    for _ in range(40):
        n = rng.randint(1, 4)
        values = [
            [rng.choice([rng.uniform(0, 10), 2.0, 5.0]) for _ in range(4)]
            for _ in range(n)
        ]
        order = list(range(4))
        rng.shuffle(order)
        report = page_test(values, predicted_order=order)
        l_oracle, p_oracle = oracle_page(values, order)
        assert report.L_statistic == pytest.approx(l_oracle, abs=1e-9)
        assert report.p_value == pytest.approx(p_oracle, abs=1e-12)


def test_page_rank_invariance_under_monotone_transform():
    rng = random.Random(37)
    values = [[rng.uniform(1, 10) for _ in range(4)] for _ in range(6)]
    transformed = [[math.log(v) ** 3 + 2 for v in row] for row in values]
    a = page_test(values)
    b = page_test(transformed)
    assert a.L_statistic == b.L_statistic
    assert a.p_value == pytest.approx(b.p_value, abs=1e-12)


def test_page_normal_approximation_beyond_budget():
    rng = random.Random(38)
    values = [[4 - j + rng.gauss(0, 0.5) for j in range(4)] for _ in range(50)]
    report = page_test(values, exact_budget=100)
    assert report.method == METHOD_NORMAL
    assert report.p_value < 0.001


def test_page_errors():
    with pytest.raises(StatsError, match="three"):
        page_test([[1.0, 2.0]])
    with pytest.raises(StatsError, match="missing"):
        page_test([[1.0, 2.0, float("nan")]])
    with pytest.raises(StatsError, match="permutation"):
        page_test([[1.0, 2.0, 3.0]], predicted_order=[0, 0, 2])


def test_page_per_subject_contribution_bounds():
    from uidc.stats import page_l_bounds

    lo, hi = page_l_bounds(4)
    assert (lo, hi) == (20, 30)
    rng = random.Random(39)
    for _ in range(50):
        row = [rng.uniform(0, 1) for _ in range(4)]
        report = page_test([row])
        assert lo - 1e-9 <= report.L_statistic <= hi + 1e-9


# --- relative delta -----------------------------------------------------------

def test_relative_delta_values():
    assert relative_delta(18.25, 15.57) == pytest.approx(-14.68, abs=5e-3)
    assert relative_delta(7.5, 7.5) == 0.0
    assert relative_delta(2.40, 2.73) == pytest.approx(13.75, abs=5e-3)


def test_relative_delta_zero_baseline_is_error():
    with pytest.raises(StatsError):
        relative_delta(0.0, 1.0)
