import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_story, story_from_layout
from uidc.errors import MetricsError
from uidc.metrics import (
    coeff_variation,
    compute_metrics,
    pos_decomposition,
    uid_global,
    uid_local,
    variance_contributions,
)
from uidc.trace import Condition

U_EXAMPLE = [10.34, 7.87, 0.08, 0.98, 2.95]
P_EXAMPLE = [10.45, 0.49, 0.01, 1.43, 0.39]


def brute_uid_global(values):
    mu = math.fsum(values) / len(values)
    return math.fsum((v - mu) ** 2 for v in values) / len(values)


def brute_uid_local(values):
    return math.fsum(
        (b - a) ** 2 for a, b in zip(values, values[1:])
    ) / (len(values) - 1)


def brute_cv(values):
    mu = math.fsum(values) / len(values)
    var = math.fsum((v - mu) ** 2 for v in values) / (len(values) - 1)
    return math.sqrt(var) / mu


surprisal_vectors = st.lists(
    st.floats(min_value=0.0, max_value=30.0, allow_nan=False), min_size=1, max_size=60
)


def test_uid_global_worked_example():
    assert uid_global(U_EXAMPLE) == pytest.approx(15.955, abs=1e-3)
    assert uid_global(U_EXAMPLE) == pytest.approx(brute_uid_global(U_EXAMPLE), abs=1e-12)


def test_uid_global_constant_vector_is_zero():
    assert uid_global([3.25, 3.25, 3.25]) == 0.0


def test_uid_global_empty_is_error():
    with pytest.raises(MetricsError):
        uid_global([])


@settings(max_examples=300, deadline=None)
@given(surprisal_vectors)
def test_uid_global_matches_brute_force(values):
    assert uid_global(values) == pytest.approx(brute_uid_global(values), rel=1e-12, abs=1e-12)


def test_uid_local_worked_example():
    assert uid_local(U_EXAMPLE) == pytest.approx(17.869, abs=1e-3)
    assert uid_local(U_EXAMPLE) == pytest.approx(brute_uid_local(U_EXAMPLE), abs=1e-12)


def test_uid_local_arithmetic_sequence():
    d = 0.75
    seq = [1.0 + d * i for i in range(8)]
    assert uid_local(seq) == pytest.approx(d * d, abs=1e-12)


def test_uid_local_single_element_is_error():
    with pytest.raises(MetricsError, match="undefined"):
        uid_local([4.2])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=30.0), min_size=2, max_size=60))
def test_uid_local_matches_brute_force(values):
    assert uid_local(values) == pytest.approx(brute_uid_local(values), rel=1e-12, abs=1e-12)


def test_cv_worked_examples():
    # Sample-sd normalization is pinned by these two caption examples.
    assert coeff_variation(U_EXAMPLE) == pytest.approx(1.0049221, abs=1e-6)
    assert coeff_variation(P_EXAMPLE) == pytest.approx(1.74, abs=5e-3)
    assert coeff_variation(P_EXAMPLE) == pytest.approx(brute_cv(P_EXAMPLE), abs=1e-12)


def test_cv_constant_positive_vector_is_zero():
    assert coeff_variation([2.5, 2.5, 2.5]) == 0.0


def test_cv_errors():
    with pytest.raises(MetricsError):
        coeff_variation([1.0])
    with pytest.raises(MetricsError):
        coeff_variation([0.0, 0.0])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(min_value=0.01, max_value=30.0), min_size=2, max_size=60))
def test_cv_matches_brute_force(values):
    assert coeff_variation(values) == pytest.approx(brute_cv(values), rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(surprisal_vectors, st.floats(min_value=-5.0, max_value=5.0))
def test_shift_invariance(values, c):
    shifted = [v + c for v in values]
    assert uid_global(shifted) == pytest.approx(uid_global(values), rel=1e-9, abs=1e-9)
    if len(values) >= 2:
        assert uid_local(shifted) == pytest.approx(uid_local(values), rel=1e-9, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(min_value=0.01, max_value=30.0), min_size=2, max_size=60),
    st.floats(min_value=0.01, max_value=10.0),
)
def test_scale_laws(values, a):
    scaled = [a * v for v in values]
    assert uid_global(scaled) == pytest.approx(a * a * uid_global(values), rel=1e-9)
    assert coeff_variation(scaled) == pytest.approx(coeff_variation(values), rel=1e-9)


def test_alternating_sequence_local_uid_closed_form():
    d = 1.25
    seq = [5.0 + (d if i % 2 == 0 else -d) for i in range(10)]
    assert uid_local(seq) == pytest.approx(4 * d * d, abs=1e-12)


def test_compute_metrics_row_counts():
    layout = [[[1.0, 2.0, 3.0], [4.0, 5.0]]]
    story = story_from_layout(layout, conditions=(Condition.U, Condition.P))
    rows = compute_metrics(story, "sentence", [Condition.U, Condition.P])
    assert len(rows) == 4
    rows_p = compute_metrics(story, "paragraph", [Condition.U, Condition.P])
    assert len(rows_p) == 2
    rows_c = compute_metrics(story, "caption", [Condition.U, Condition.P])
    assert len(rows_c) == 2
    assert all(r.level == "caption" and r.unit_index == 0 for r in rows_c)


def test_compute_metrics_one_word_sentence_degenerate():
    story = story_from_layout([[[7.0], [1.0, 2.0]]])
    rows = compute_metrics(story, "sentence", [Condition.U])
    first = rows[0]
    assert first.n_words == 1
    assert first.uid_v == 0.0
    assert first.uid_lv is None
    assert first.cv is None


def test_compute_metrics_missing_condition_names_it():
    story = story_from_layout([[[1.0, 2.0]]])
    with pytest.raises(MetricsError, match="P"):
        compute_metrics(story, "sentence", [Condition.P])


def test_compute_metrics_matches_per_unit_oracle():
    rng = random.Random(11)
    for i in range(30):
        story = random_story(rng, f"s{i}")
        conditions = story.conditions()
        for level in ("sentence", "paragraph", "caption"):
            rows = compute_metrics(story, level, conditions)
            by_key = {(r.unit_index, r.condition): r for r in rows}
            if level == "sentence":
                ranges = [s.word_range for s in story.sentences]
            elif level == "paragraph":
                ranges = [story.paragraph_word_range(p) for p in range(len(story.paragraphs))]
            else:
                ranges = [(0, len(story.words))]
            for u, (w0, w1) in enumerate(ranges):
                for c in conditions:
                    values = [w.surprisal[c] for w in story.words[w0:w1]]
                    row = by_key[(u, c)]
                    assert row.n_words == len(values)
                    assert row.mean_surprisal == pytest.approx(
                        math.fsum(values) / len(values), rel=1e-12, abs=1e-12
                    )
                    assert row.uid_v == pytest.approx(
                        brute_uid_global(values), rel=1e-12, abs=1e-12
                    )


def test_exclude_pos_drops_tagged_words():
    story = story_from_layout(
        [[[1.0, 2.0, 9.0]]], pos_tags=["NOUN", "VERB", "PUNCT"]
    )
    rows = compute_metrics(story, "sentence", [Condition.U], exclude_pos=frozenset({"PUNCT"}))
    assert rows[0].n_words == 2
    assert rows[0].mean_surprisal == pytest.approx(1.5)


def test_variance_contributions_sum_to_uid_global():
    rng = random.Random(13)
    for _ in range(200):
        values = [rng.uniform(0, 25) for _ in range(rng.randint(1, 40))]
        total = math.fsum(variance_contributions(values))
        assert total == pytest.approx(uid_global(values), rel=1e-12, abs=1e-12)


def grounded_story(u_values, p_values, pos_tags):
    layout = [[[
        {Condition.U: u, Condition.P: p} for u, p in zip(u_values, p_values)
    ]]]
    return story_from_layout(
        layout, conditions=(Condition.U, Condition.P), pos_tags=pos_tags
    )


def test_pos_decomposition_excludes_non_failure_sentences():
    story = grounded_story([1.0, 5.0, 3.0], [1.0, 5.0, 3.0], ["NOUN", "VERB", "ADJ"])
    assert pos_decomposition([story], Condition.U, Condition.P, min_count=1) == []


def test_pos_decomposition_single_failure_sentence():
    # Word 0 sits at the baseline mean, so its baseline contribution is zero.
    u = [2.0, 1.0, 3.0]
    p = [8.0, 1.0, 3.0]
    story = grounded_story(u, p, ["NOUN", "VERB", "ADJ"])
    out = pos_decomposition([story], Condition.U, Condition.P, min_count=1)
    noun = [c for c in out if c.pos_tag == "NOUN"][0]
    mu_p = sum(p) / 3
    assert noun.delta_c_mean == pytest.approx((p[0] - mu_p) ** 2 / 3, rel=1e-12)
    assert noun.n_words == 1
    assert noun.pct_increase == 1.0
    assert noun.pct_decrease == 0.0


def test_pos_decomposition_min_count_filter():
    u = [2.0, 1.0, 3.0]
    p = [8.0, 1.0, 3.0]
    story = grounded_story(u, p, ["NOUN", "VERB", "ADJ"])
    assert pos_decomposition([story], Condition.U, Condition.P, min_count=2) == []


def test_pos_decomposition_requires_tags():
    story = grounded_story([2.0, 1.0], [8.0, 1.0], [None, None])
    with pytest.raises(MetricsError, match="POS"):
        pos_decomposition([story], Condition.U, Condition.P)


def test_pos_decomposition_identity_on_random_corpus():
    rng = random.Random(17)
    for i in range(40):
        story = random_story(rng, f"s{i}")
        for c in story.conditions():
            for sent in story.sentences:
                w0, w1 = sent.word_range
                values = [w.surprisal[c] for w in story.words[w0:w1]]
                assert math.fsum(variance_contributions(values)) == pytest.approx(
                    uid_global(values), rel=1e-12, abs=1e-12
                )


def test_pos_decomposition_fraction_bounds():
    rng = random.Random(23)
    stories = []
    for i in range(30):
        n = rng.randint(2, 10)
        u = [rng.uniform(0, 10) for _ in range(n)]
        p = [rng.uniform(0, 10) for _ in range(n)]
        tags = [rng.choice(["NOUN", "VERB"]) for _ in range(n)]
        stories.append(
            grounded_story(u, p, tags),
        )
    stories = [
        s.__class__(**{**s.__dict__, "story_id": f"s{i}"}) for i, s in enumerate(stories)
    ]
    out = pos_decomposition(stories, Condition.U, Condition.P, min_count=1)
    assert out
    for contribution in out:
        assert 0.0 <= contribution.pct_increase <= 1.0
        assert 0.0 <= contribution.pct_decrease <= 1.0
        assert contribution.pct_increase + contribution.pct_decrease <= 1.0 + 1e-12
