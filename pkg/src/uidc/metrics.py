"""Per-unit information measures over word surprisal vectors.

Two variance-based uniformity metrics are computed per unit (sentence,
paragraph, or whole caption) and condition:

* global: ``(1/n) * sum((s_t - mean)^2)`` over the unit's words;
* local:  ``(1/(n-1)) * sum((s_t - s_{t-1})^2)`` over adjacent words.

The coefficient of variation uses the sample standard deviation
(``1/(n-1)`` normalization) divided by the mean; the mismatch with the
global metric's ``1/n`` factor is intentional and recorded in run metadata.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import MetricsError
from .trace import CONDITION_ORDER, Condition, Story

LEVEL_SENTENCE = "sentence"
LEVEL_PARAGRAPH = "paragraph"
LEVEL_CAPTION = "caption"
LEVELS = (LEVEL_SENTENCE, LEVEL_PARAGRAPH, LEVEL_CAPTION)


@dataclass(frozen=True)
class MetricRow:
    """Measurements for one (unit, condition) cell."""

    story_id: str
    language: str
    level: str
    unit_index: int
    condition: Condition
    n_words: int
    mean_surprisal: float
    uid_v: float
    uid_lv: float | None
    cv: float | None


@dataclass(frozen=True)
class PosContribution:
    """Mean change in per-word variance contribution for one (language, POS)."""

    pos_tag: str
    language: str
    delta_c_mean: float
    n_words: int
    pct_increase: float
    pct_decrease: float


def uid_global(s: Sequence[float] | np.ndarray) -> float:
    """Population variance of the surprisal vector (length n >= 1), bits^2."""
    arr = np.asarray(s, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise MetricsError("global UID requires a non-empty 1-d surprisal vector")
    mu = arr.mean()
    return float(np.mean((arr - mu) ** 2))


def uid_local(s: Sequence[float] | np.ndarray) -> float:
    """Mean squared difference of consecutive surprisals (length n >= 2), bits^2."""
    arr = np.asarray(s, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise MetricsError("local UID undefined for fewer than two words")
    return float(np.mean(np.diff(arr) ** 2))


def coeff_variation(s: Sequence[float] | np.ndarray) -> float:
    """Sample standard deviation over mean; requires n >= 2 and mean > 0."""
    arr = np.asarray(s, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise MetricsError("coefficient of variation undefined for fewer than two words")
    mu = arr.mean()
    if mu <= 0.0:
        raise MetricsError(f"coefficient of variation undefined for mean {mu}")
    return float(arr.std(ddof=1) / mu)


def _unit_word_ranges(story: Story, level: str) -> list[tuple[int, int]]:
    if level == LEVEL_SENTENCE:
        return [s.word_range for s in story.sentences]
    if level == LEVEL_PARAGRAPH:
        return [story.paragraph_word_range(i) for i in range(len(story.paragraphs))]
    if level == LEVEL_CAPTION:
        return [(0, len(story.words))]
    raise MetricsError(f"unknown level {level!r}")


def _word_surprisal_vector(story: Story, condition: Condition) -> np.ndarray:
    values = []
    for word in story.words:
        if condition not in word.surprisal:
            raise MetricsError(
                f"story {story.story_id!r}: condition {condition.value} missing "
                "from word surprisal (run alignment first)"
            )
        values.append(word.surprisal[condition])
    return np.asarray(values, dtype=float)


def compute_metrics(
    story: Story,
    level: str,
    conditions: Iterable[Condition],
    exclude_pos: frozenset[str] = frozenset(),
) -> list[MetricRow]:
    """One MetricRow per (unit at ``level``, condition).

    Degenerate cells keep their defined entries: a one-word unit has
    ``uid_v == 0`` with ``uid_lv`` and ``cv`` absent. Words whose POS tag is in
    ``exclude_pos`` are dropped before any computation; a unit left empty
    produces no rows.
    """
    conditions = list(conditions)
    vectors = {c: _word_surprisal_vector(story, c) for c in conditions}
    keep = np.array(
        [w.pos_tag not in exclude_pos for w in story.words], dtype=bool
    )
    rows: list[MetricRow] = []
    for unit_index, (w0, w1) in enumerate(_unit_word_ranges(story, level)):
        mask = keep[w0:w1]
        if not mask.any():
            continue
        for condition in conditions:
            s = vectors[condition][w0:w1][mask]
            n = int(s.size)
            mu = float(s.mean())
            rows.append(
                MetricRow(
                    story_id=story.story_id,
                    language=story.language,
                    level=level,
                    unit_index=unit_index,
                    condition=condition,
                    n_words=n,
                    mean_surprisal=mu,
                    uid_v=uid_global(s),
                    uid_lv=uid_local(s) if n >= 2 else None,
                    cv=coeff_variation(s) if n >= 2 and mu > 0.0 else None,
                )
            )
    return rows


def variance_contributions(s: Sequence[float] | np.ndarray) -> np.ndarray:
    """Per-word contribution ``(s_w - mean)^2 / n``; sums to the global metric."""
    arr = np.asarray(s, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise MetricsError("variance contributions require a non-empty vector")
    return (arr - arr.mean()) ** 2 / arr.size


def pos_decomposition(
    stories: Iterable[Story],
    baseline: Condition,
    grounded: Condition,
    min_count: int = 50,
) -> list[PosContribution]:
    """Decompose uniformity failures by part of speech.

    Over sentences where the grounded condition has strictly higher global UID
    than the baseline, average the per-word change in variance contribution by
    (language, POS), together with the fraction of words whose surprisal rose
    or fell. Groups with fewer than ``min_count`` words are dropped.
    """
    acc: dict[tuple[str, str], list[float]] = {}
    ups: dict[tuple[str, str], int] = {}
    downs: dict[tuple[str, str], int] = {}
    saw_pos = False
    saw_failure = False
    for story in stories:
        s_b = _word_surprisal_vector(story, baseline)
        s_g = _word_surprisal_vector(story, grounded)
        if any(w.pos_tag is not None for w in story.words):
            saw_pos = True
        for w0, w1 in _unit_word_ranges(story, LEVEL_SENTENCE):
            sb, sg = s_b[w0:w1], s_g[w0:w1]
            if uid_global(sg) <= uid_global(sb):
                continue
            saw_failure = True
            delta_c = variance_contributions(sg) - variance_contributions(sb)
            for offset, word in enumerate(story.words[w0:w1]):
                if word.pos_tag is None:
                    continue
                key = (story.language, word.pos_tag)
                acc.setdefault(key, []).append(float(delta_c[offset]))
                ups[key] = ups.get(key, 0) + int(sg[offset] > sb[offset])
                downs[key] = downs.get(key, 0) + int(sg[offset] < sb[offset])
    if not saw_pos:
        raise MetricsError("POS decomposition requires POS tags on words")
    if not saw_failure:
        return []
    out = []
    for (language, pos_tag), deltas in sorted(acc.items()):
        n = len(deltas)
        if n < min_count:
            continue
        out.append(
            PosContribution(
                pos_tag=pos_tag,
                language=language,
                delta_c_mean=float(np.mean(deltas)),
                n_words=n,
                pct_increase=ups[(language, pos_tag)] / n,
                pct_decrease=downs[(language, pos_tag)] / n,
            )
        )
    return out


def conditions_in_order(conditions: Iterable[Condition]) -> list[Condition]:
    present = set(conditions)
    return [c for c in CONDITION_ORDER if c in present]
