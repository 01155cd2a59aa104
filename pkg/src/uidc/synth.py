"""Synthetic trace corpora with planted, analytically known structure.

Every estimator in the package is validated against corpora from this
generator: per-condition shrinkage factors scale within-unit surprisal
deviations (so uniformity ratios are known exactly in the noiseless regime),
onset spikes plant boundary discontinuities of known height, and a drift
slope plants positional trends for the regression module to recover.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .contour import normalized_position
from .errors import SynthError
from .trace import (
    CONDITION_ORDER,
    Condition,
    Paragraph,
    Sentence,
    Story,
    Token,
    Word,
    validate_story,
)


@dataclass(frozen=True)
class SynthSpec:
    """Generator knobs; identical specs produce byte-identical corpora."""

    n_stories: int = 10
    paragraphs_per_story: int = 4
    sentences_per_paragraph: int = 3
    words_per_sentence: int = 6
    base_surprisal: float = 10.0
    condition_shrinkage: Mapping[Condition, float] = field(
        default_factory=lambda: {Condition.U: 1.0, Condition.P: 0.9}
    )
    onset_spike: float = 0.0
    drift_slope: float = 0.0
    noise_sd: float = 0.0
    words_jitter: int = 0
    seed: int = 0
    language: str = "zxx"
    source: str = "synth"

    def conditions(self) -> list[Condition]:
        return [c for c in CONDITION_ORDER if c in self.condition_shrinkage]


def _validate_spec(spec: SynthSpec) -> None:
    for name in (
        "n_stories",
        "paragraphs_per_story",
        "sentences_per_paragraph",
        "words_per_sentence",
    ):
        if getattr(spec, name) < 1:
            raise SynthError(f"{name} must be >= 1")
    if not spec.condition_shrinkage:
        raise SynthError("condition_shrinkage must name at least one condition")
    for cond, factor in spec.condition_shrinkage.items():
        if not 0.0 < factor <= 1.0:
            raise SynthError(f"shrinkage for {cond.value} must be in (0, 1], got {factor}")
    if Condition.U in spec.condition_shrinkage and spec.condition_shrinkage[Condition.U] != 1.0:
        raise SynthError("shrinkage for U must be 1.0 (it is the reference signal)")
    if Condition.PD in spec.condition_shrinkage and spec.paragraphs_per_story < 2:
        raise SynthError("PD requires at least two paragraphs per story")
    if spec.noise_sd < 0.0:
        raise SynthError("noise_sd must be non-negative")
    if spec.words_jitter < 0:
        raise SynthError("words_jitter must be non-negative")


def generate(spec: SynthSpec) -> list[Story]:
    """Generate validated stories with the planted structure of ``spec``.

    Clean word-level surprisal under the reference condition is
    ``base + spike*[unit onset] + drift*paragraph_position``; every other
    condition shrinks the deviation from its paragraph mean by its factor, so
    unit-level uniformity scales by the squared factor exactly before noise.
    Per-condition Gaussian noise is added afterwards and values clip at zero.
    """
    _validate_spec(spec)
    conditions = spec.conditions()
    stories = []
    for story_index in range(spec.n_stories):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=spec.seed, spawn_key=(story_index,))
        )
        n_paragraphs = spec.paragraphs_per_story
        n_sent = spec.sentences_per_paragraph
        n_words_sent = spec.words_per_sentence

        sentence_lengths = [
            [
                n_words_sent
                + (int(rng.integers(0, spec.words_jitter + 1)) if spec.words_jitter else 0)
                for _s in range(n_sent)
            ]
            for _p in range(n_paragraphs)
        ]
        clean: list[float] = []
        para_slices: list[tuple[int, int]] = []
        for p_index in range(n_paragraphs):
            start = len(clean)
            drift = spec.drift_slope * normalized_position(p_index, n_paragraphs)
            for s_index in range(n_sent):
                for w_index in range(sentence_lengths[p_index][s_index]):
                    value = spec.base_surprisal + drift
                    if w_index == 0:
                        value += spec.onset_spike
                    clean.append(value)
            para_slices.append((start, len(clean)))
        clean_arr = np.asarray(clean)

        surprisal = {}
        for cond in conditions:
            factor = spec.condition_shrinkage[cond]
            values = np.empty_like(clean_arr)
            for start, end in para_slices:
                anchor = clean_arr[start:end].mean()
                values[start:end] = anchor + factor * (clean_arr[start:end] - anchor)
            if spec.noise_sd > 0.0:
                values = values + rng.normal(0.0, spec.noise_sd, size=values.size)
            surprisal[cond] = np.maximum(values, 0.0)

        words = []
        tokens = []
        sentences = []
        paragraphs = []
        text_parts: list[str] = []
        cursor = 0
        word_counter = 0
        for p_index in range(n_paragraphs):
            first_sentence = len(sentences)
            for s_index in range(n_sent):
                first_word = len(words)
                for _w in range(sentence_lengths[p_index][s_index]):
                    token_text = f"w{word_counter:04d}"
                    if text_parts:
                        text_parts.append(" ")
                        cursor += 1
                    span = (cursor, cursor + len(token_text))
                    text_parts.append(token_text)
                    cursor += len(token_text)
                    tokens.append(
                        Token(
                            text=token_text,
                            char_span=span,
                            surprisal={
                                c: float(surprisal[c][word_counter]) for c in conditions
                            },
                        )
                    )
                    words.append(
                        Word(
                            text=token_text,
                            char_span=span,
                            token_range=(word_counter, word_counter + 1),
                            pos_tag=None,
                        )
                    )
                    word_counter += 1
                sentences.append(Sentence(word_range=(first_word, len(words))))
            paragraphs.append(
                Paragraph(
                    sentence_range=(first_sentence, len(sentences)),
                    image_ref=f"img-{story_index:05d}-{p_index:03d}",
                )
            )
        story = Story(
            story_id=f"synth-{story_index:05d}",
            language=spec.language,
            source=spec.source,
            text="".join(text_parts),
            tokens=tuple(tokens),
            words=tuple(words),
            sentences=tuple(sentences),
            paragraphs=tuple(paragraphs),
        )
        stories.append(validate_story(story))
    return stories


def spec_from_json(obj: dict) -> SynthSpec:
    """Build a SynthSpec from a plain JSON object (CLI input)."""
    kwargs = dict(obj)
    if "condition_shrinkage" in kwargs:
        kwargs["condition_shrinkage"] = {
            Condition(k): float(v) for k, v in kwargs["condition_shrinkage"].items()
        }
    try:
        return SynthSpec(**kwargs)
    except TypeError as exc:
        raise SynthError(f"bad synthetic-corpus spec: {exc}") from exc
