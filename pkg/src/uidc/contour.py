"""Positional structure of surprisal: reduction contours and boundary deltas.

Reduction scores quantify, per word, how much surprisal drops when context is
added (image, discourse history, or images on top of discourse). Their
positive part, histogrammed over normalized position and Gaussian-smoothed,
yields the contextual-reduction density curves. Boundary deltas measure the
surprisal jump across adjacent units: mean of the final ``w`` words of the
preceding unit minus mean of the first ``w`` words of the following one, so
onset spikes come out negative under the default sign convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ContourError
from .metrics import LEVEL_PARAGRAPH, LEVEL_SENTENCE
from .trace import Condition, Story

DELTA_P = "delta_P"
DELTA_D = "delta_D"
DELTA_PD = "delta_PD"
REDUCTION_KINDS = (DELTA_P, DELTA_D, DELTA_PD)


@dataclass(frozen=True)
class WordReduction:
    """Per-word context-reduction scores with normalized positions."""

    story_id: str
    language: str
    word_index: int
    delta_P: float
    delta_D: float
    delta_PD: float
    position_in_sentence: float
    position_in_paragraph: float

    def get(self, which: str) -> float:
        if which == DELTA_P:
            return self.delta_P
        if which == DELTA_D:
            return self.delta_D
        if which == DELTA_PD:
            return self.delta_PD
        raise ContourError(f"unknown reduction kind {which!r}")


@dataclass(frozen=True)
class DensityCurve:
    bins: int
    bandwidth_bins: float
    values: tuple[float, ...]
    n_observations: int

    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.bins) + 0.5) / self.bins


@dataclass(frozen=True)
class BoundaryDelta:
    level: str
    window_w: int
    condition: Condition
    mean_delta: float
    n_transitions: int
    n_skipped: int


def normalized_position(index: int, count: int) -> float:
    """Relative position in [0, 1]; a singleton unit sits at 0 (the onset)."""
    if not 0 <= index < count:
        raise ContourError(f"index {index} out of range for count {count}")
    if count == 1:
        return 0.0
    return index / (count - 1)


def reduction_scores(story: Story) -> list[WordReduction]:
    """Per-word reductions: U-P (image), U-D (discourse), D-PD (joint images).

    Requires all four conditions on the story's word surprisals.
    """
    for cond in (Condition.U, Condition.P, Condition.D, Condition.PD):
        if any(cond not in w.surprisal for w in story.words):
            raise ContourError(
                f"story {story.story_id!r}: condition {cond.value} required for reduction scores"
            )
    out: list[WordReduction] = []
    for s_index, sentence in enumerate(story.sentences):
        w0, w1 = sentence.word_range
        n_sent = w1 - w0
        for offset in range(n_sent):
            word = story.words[w0 + offset]
            out.append(
                WordReduction(
                    story_id=story.story_id,
                    language=story.language,
                    word_index=w0 + offset,
                    delta_P=word.surprisal[Condition.U] - word.surprisal[Condition.P],
                    delta_D=word.surprisal[Condition.U] - word.surprisal[Condition.D],
                    delta_PD=word.surprisal[Condition.D] - word.surprisal[Condition.PD],
                    position_in_sentence=normalized_position(offset, n_sent),
                    position_in_paragraph=0.0,
                )
            )
    # Second pass for paragraph positions (words indexed per paragraph).
    by_index = {r.word_index: r for r in out}
    fixed: list[WordReduction] = []
    for p_index in range(len(story.paragraphs)):
        w0, w1 = story.paragraph_word_range(p_index)
        n_para = w1 - w0
        for offset in range(n_para):
            r = by_index[w0 + offset]
            fixed.append(
                WordReduction(
                    story_id=r.story_id,
                    language=r.language,
                    word_index=r.word_index,
                    delta_P=r.delta_P,
                    delta_D=r.delta_D,
                    delta_PD=r.delta_PD,
                    position_in_sentence=r.position_in_sentence,
                    position_in_paragraph=normalized_position(offset, n_para),
                )
            )
    return fixed


def _gaussian_kernel(sigma_bins: float) -> np.ndarray:
    radius = int(round(4.0 * sigma_bins))
    offsets = np.arange(-radius, radius + 1, dtype=float)
    kernel = np.exp(-0.5 * (offsets / sigma_bins) ** 2)
    return kernel / kernel.sum()


def smooth_histogram(hist: np.ndarray, bandwidth_bins: float) -> np.ndarray:
    """Gaussian smoothing truncated at 4 sigma, renormalized at the edges.

    Dividing by the smoothed all-ones signal keeps flat inputs exactly flat
    and confines every kernel's mass to the domain.
    """
    if bandwidth_bins < 0:
        raise ContourError("bandwidth must be non-negative")
    if bandwidth_bins == 0:
        return hist.astype(float)
    kernel = _gaussian_kernel(bandwidth_bins)
    smoothed = np.convolve(hist, kernel, mode="same")
    coverage = np.convolve(np.ones_like(hist, dtype=float), kernel, mode="same")
    return smoothed / coverage


def reduction_density(
    scores: Sequence[WordReduction],
    which: str,
    level: str,
    bins: int = 50,
    bandwidth_bins: float = 2.0,
    count_weighted: bool = False,
) -> DensityCurve:
    """Density of strictly positive reductions over normalized position.

    Mass-weighted by default (each word contributes its reduction magnitude);
    ``count_weighted`` gives every positive reduction unit weight. The curve
    is smoothed and normalized to unit area over [0, 1].
    """
    if bins < 1:
        raise ContourError("bins must be >= 1")
    if level == LEVEL_SENTENCE:
        positions = [r.position_in_sentence for r in scores]
    elif level == LEVEL_PARAGRAPH:
        positions = [r.position_in_paragraph for r in scores]
    else:
        raise ContourError(f"densities are defined at sentence/paragraph level, not {level!r}")
    values = np.array([r.get(which) for r in scores], dtype=float)
    positions = np.asarray(positions, dtype=float)
    positive = values > 0.0
    if not positive.any():
        raise ContourError("empty density: no positive reductions")
    pos = positions[positive]
    weight = np.ones(pos.size) if count_weighted else values[positive]
    idx = np.minimum((pos * bins).astype(int), bins - 1)
    hist = np.bincount(idx, weights=weight, minlength=bins).astype(float)
    curve = smooth_histogram(hist, bandwidth_bins)
    area = curve.sum() / bins
    if area <= 0.0:
        raise ContourError("empty density: zero total mass")
    curve = curve / area
    return DensityCurve(
        bins=bins,
        bandwidth_bins=bandwidth_bins,
        values=tuple(float(v) for v in curve),
        n_observations=int(positive.sum()),
    )


def _unit_vectors(story: Story, level: str, condition: Condition) -> list[list[np.ndarray]]:
    """Word-surprisal vectors of the units at ``level``, grouped by parent."""
    surp = np.array(
        [w.surprisal[condition] if condition in w.surprisal else np.nan for w in story.words]
    )
    if np.isnan(surp).any():
        raise ContourError(
            f"story {story.story_id!r}: condition {condition.value} missing for boundary deltas"
        )
    groups: list[list[np.ndarray]] = []
    if level == LEVEL_SENTENCE:
        for para_index in range(len(story.paragraphs)):
            s0, s1 = story.paragraphs[para_index].sentence_range
            groups.append(
                [surp[w0:w1] for w0, w1 in (story.sentences[i].word_range for i in range(s0, s1))]
            )
    elif level == LEVEL_PARAGRAPH:
        groups.append(
            [
                surp[slice(*story.paragraph_word_range(i))]
                for i in range(len(story.paragraphs))
            ]
        )
    else:
        raise ContourError(f"boundaries are defined at sentence/paragraph level, not {level!r}")
    return groups


def boundary_deltas(
    stories: Iterable[Story],
    level: str,
    condition: Condition,
    w_values: Sequence[int] = (1, 2, 3),
    sign: int = -1,
) -> list[BoundaryDelta]:
    """Mean windowed surprisal difference across adjacent same-parent units.

    ``sign=-1`` (default) reports final-minus-first so onset spikes are
    negative; ``sign=+1`` flips to first-minus-final. Transitions where either
    unit is shorter than ``w`` are skipped and counted.
    """
    if sign not in (-1, 1):
        raise ContourError("sign must be -1 or +1")
    sums = {w: 0.0 for w in w_values}
    used = {w: 0 for w in w_values}
    skipped = {w: 0 for w in w_values}
    for story in stories:
        for units in _unit_vectors(story, level, condition):
            for prev, nxt in zip(units, units[1:]):
                for w in w_values:
                    if len(prev) < w or len(nxt) < w:
                        skipped[w] += 1
                        continue
                    delta = float(prev[-w:].mean() - nxt[:w].mean())
                    sums[w] += delta if sign == -1 else -delta
                    used[w] += 1
    out = []
    for w in w_values:
        if used[w] == 0:
            raise ContourError(f"no valid transitions for window {w} at level {level}")
        out.append(
            BoundaryDelta(
                level=level,
                window_w=w,
                condition=condition,
                mean_delta=sums[w] / used[w],
                n_transitions=used[w],
                n_skipped=skipped[w],
            )
        )
    return out
