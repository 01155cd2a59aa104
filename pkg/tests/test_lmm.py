import math
import random

import numpy as np
import pytest

from conftest import story_from_layout
from uidc.errors import LmmError
from uidc.lmm import (
    LmmSpec,
    Observation,
    build_observations,
    fit_lmm,
    slopes_report,
)
from uidc.trace import Condition

FOUR = [Condition.U, Condition.P, Condition.D, Condition.PD]

TRUE_BETA = {
    "(Intercept)": 5.0,
    "position": -2.0,
    "condition[P]": 1.5,
    "condition[D]": -1.0,
    "condition[PD]": 2.5,
    "position:condition[P]": -1.2,
    "position:condition[D]": 0.8,
    "position:condition[PD]": -2.0,
    "log_length": 1.0,
}


def simulate(seed, n_stories=200, n_units=10, noise=0.5, b0_sd=0.0, b1_sd=0.0,
             conditions=FOUR):
    rng = np.random.default_rng(seed)
    rows = []
    for s in range(n_stories):
        b0 = rng.normal(0.0, b0_sd) if b0_sd > 0 else 0.0
        b1 = rng.normal(0.0, b1_sd) if b1_sd > 0 else 0.0
        for u in range(n_units):
            pos = u / (n_units - 1)
            length = int(rng.integers(5, 30))
            for c in conditions:
                y = (
                    TRUE_BETA["(Intercept)"]
                    + TRUE_BETA["position"] * pos
                    + TRUE_BETA["log_length"] * math.log(length)
                )
                if c != Condition.U:
                    y += TRUE_BETA[f"condition[{c.value}]"]
                    y += TRUE_BETA[f"position:condition[{c.value}]"] * pos
                y += b0 + b1 * pos + rng.normal(0.0, noise)
                rows.append(
                    Observation(y=y, position=pos, condition=c, length=length,
                                story_id=f"s{s:04d}")
                )
    return rows


def ols_oracle(rows, conditions):
    others = [c for c in conditions if c != Condition.U]
    X, y = [], []
    ordered = sorted(rows, key=lambda r: (r.story_id, r.position, r.condition.value, r.y, r.length))
    for r in ordered:
        row = [1.0, r.position]
        row += [1.0 if r.condition == c else 0.0 for c in others]
        row += [r.position if r.condition == c else 0.0 for c in others]
        row.append(math.log(r.length))
        X.append(row)
        y.append(r.y)
    return np.linalg.lstsq(np.array(X), np.array(y), rcond=None)[0]


def test_zero_random_variance_matches_ols():
    rows = simulate(123, b0_sd=0.0, b1_sd=0.0)
    fit = fit_lmm(rows, LmmSpec())
    ols = ols_oracle(rows, FOUR)
    est = np.array([fit.beta[name] for name in fit.beta_names])
    assert fit.converged
    assert np.abs(est - ols).max() < 1e-4


def test_gls_at_zero_g_equals_ols_on_any_design():
    # Evaluate the profiled objective with the random-effect scale pinned to
    # (numerically) zero: the GLS solution must coincide with plain OLS.
    from uidc.lmm import _design, _deviance, _group_stats

    rows = sorted(
        simulate(55, n_stories=25, n_units=5, noise=0.7, b0_sd=1.0, b1_sd=0.5),
        key=lambda r: (r.story_id, r.position, r.condition.value, r.y, r.length),
    )
    X, y, Z, names, conditions = _design(rows, Condition.U)
    groups: dict[str, list[int]] = {}
    for i, r in enumerate(rows):
        groups.setdefault(r.story_id, []).append(i)
    stats = _group_stats(X, y, Z, [np.asarray(g) for g in sorted(groups.values())])
    params = np.array([-20.0, 0.0, -20.0, 0.0])
    out = _deviance(params, stats, X.shape[1], X.shape[0], reml=True)
    assert out is not None
    _dev, beta, _A, _quad = out
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    assert np.abs(beta - ols).max() < 1e-10


def test_planted_effects_recovered_within_five_percent():
    rows = simulate(42, b0_sd=1.0, b1_sd=0.5)
    fit = fit_lmm(rows, LmmSpec())
    assert fit.converged
    for name, true in TRUE_BETA.items():
        est = fit.beta[name]
        assert abs(est - true) / abs(true) < 0.05, (name, true, est)
    # Variance components are in the right neighbourhood.
    assert fit.G[0, 0] == pytest.approx(1.0, abs=0.35)
    assert fit.G[1, 1] == pytest.approx(0.25, abs=0.2)
    assert fit.sigma2 == pytest.approx(0.25, abs=0.1)


def test_single_condition_collapses_model():
    rows = simulate(7, n_stories=40, n_units=6, conditions=[Condition.U])
    fit = fit_lmm(rows, LmmSpec())
    assert fit.beta_names == ("(Intercept)", "position", "log_length")
    assert list(fit.slope_by_condition) == [Condition.U]
    assert fit.slope_by_condition[Condition.U] == fit.beta["position"]


def test_slope_by_condition_is_exact_sum():
    rows = simulate(9, n_stories=50, n_units=6, b0_sd=0.5, b1_sd=0.2)
    fit = fit_lmm(rows, LmmSpec())
    for c in FOUR:
        if c == Condition.U:
            assert fit.slope_by_condition[c] == fit.beta["position"]
        else:
            expected = fit.beta["position"] + fit.beta[f"position:condition[{c.value}]"]
            assert fit.slope_by_condition[c] == expected


def test_row_permutation_invariance():
    rows = simulate(21, n_stories=30, n_units=5, b0_sd=0.8, b1_sd=0.3)
    fit_a = fit_lmm(rows, LmmSpec())
    shuffled = list(rows)
    random.Random(99).shuffle(shuffled)
    fit_b = fit_lmm(shuffled, LmmSpec())
    for name in fit_a.beta_names:
        assert fit_a.beta[name] == pytest.approx(fit_b.beta[name], abs=1e-10)
    assert fit_a.sigma2 == pytest.approx(fit_b.sigma2, abs=1e-10)


def test_deviance_history_non_increasing():
    rows = simulate(5, n_stories=40, n_units=6, b0_sd=1.0, b1_sd=0.4)
    fit = fit_lmm(rows, LmmSpec())
    history = fit.deviance_history
    assert len(history) >= 2
    for a, b in zip(history, history[1:]):
        assert b <= a + 1e-6


def test_g_is_symmetric_psd_and_sigma2_positive():
    rows = simulate(3, n_stories=40, n_units=6, b0_sd=1.0, b1_sd=0.4)
    fit = fit_lmm(rows, LmmSpec())
    assert np.allclose(fit.G, fit.G.T)
    eigenvalues = np.linalg.eigvalsh(fit.G)
    assert (eigenvalues >= -1e-12).all()
    assert fit.sigma2 > 0.0


def test_ml_flag_changes_objective():
    rows = simulate(15, n_stories=30, n_units=5, b0_sd=0.8, b1_sd=0.3)
    reml = fit_lmm(rows, LmmSpec(reml=True))
    ml = fit_lmm(rows, LmmSpec(reml=False))
    assert reml.method == "reml" and ml.method == "ml"
    assert reml.loglik != ml.loglik


def test_errors_on_bad_grouping():
    rows = simulate(1, n_stories=1, n_units=5)
    with pytest.raises(LmmError, match="two stories"):
        fit_lmm(rows, LmmSpec())
    few = [
        Observation(y=1.0, position=0.0, condition=Condition.U, length=3, story_id="a"),
        Observation(y=2.0, position=1.0, condition=Condition.U, length=3, story_id="b"),
        Observation(y=3.0, position=0.0, condition=Condition.U, length=3, story_id="b"),
    ]
    with pytest.raises(LmmError, match="fewer than two observations"):
        fit_lmm(few, LmmSpec())


def test_singular_design_names_column():
    rows = [
        Observation(y=float(i), position=0.5, condition=Condition.U, length=4,
                    story_id=f"s{i % 3}")
        for i in range(12)
    ]
    with pytest.raises(LmmError, match="position"):
        fit_lmm(rows, LmmSpec())


def test_missing_baseline_is_error():
    rows = simulate(2, n_stories=10, n_units=4, conditions=[Condition.P, Condition.D])
    with pytest.raises(LmmError, match="baseline"):
        fit_lmm(rows, LmmSpec())


def four_condition_layout(n_paragraphs, n_sentences, n_words, value=5.0):
    return [
        [
            [
                {c: value + 0.1 * w for c in FOUR}
                for w in range(n_words)
            ]
            for _ in range(n_sentences)
        ]
        for _ in range(n_paragraphs)
    ]


def test_build_observations_sentence_level_minimum():
    story = story_from_layout(
        four_condition_layout(2, 2, 3), conditions=tuple(FOUR), story_id="few"
    )
    obs = build_observations([story], "mean_surprisal", "sentence", FOUR,
                             min_sentences_per_paragraph=3)
    assert obs == []
    story3 = story_from_layout(
        four_condition_layout(2, 3, 3), conditions=tuple(FOUR), story_id="enough"
    )
    obs3 = build_observations([story3], "mean_surprisal", "sentence", FOUR,
                              min_sentences_per_paragraph=3)
    assert len(obs3) == 2 * 3 * 4
    positions = sorted({o.position for o in obs3})
    assert positions == [0.0, 0.5, 1.0]


def test_build_observations_paragraph_positions():
    story = story_from_layout(
        four_condition_layout(3, 1, 4), conditions=tuple(FOUR), story_id="p3"
    )
    obs = build_observations([story], "uid_v", "paragraph", FOUR)
    positions = sorted({o.position for o in obs})
    assert positions == [0.0, 0.5, 1.0]
    assert all(o.length == 4 for o in obs)


def test_slopes_report_shapes_and_flags():
    rows = simulate(11, n_stories=40, n_units=6, b0_sd=0.5, b1_sd=0.2)
    fit = fit_lmm(rows, LmmSpec())
    table = slopes_report({("eng", "paragraph", "mean_surprisal"): fit})
    assert len(table) == 4
    u_row = [r for r in table if r["condition"] == "U"][0]
    assert u_row["slope"] == fit.beta["position"]
    assert u_row["p_value"] is not None
    assert u_row["converged"]
