"""Character-perplexity language screen.

Per language, the candidate model's character-level perplexity over the
input texts is compared against a random-embedding control; the ratio
(candidate / control) drives a keep/drop recommendation: keep when the
candidate beats the control by more than the threshold margin
(``ratio < threshold``, strict, so a control scored against itself is
dropped at threshold 1.0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .backends import Backend, JobError
from .datasets import InputStory


@dataclass(frozen=True)
class LanguageScreenReport:
    language: str
    n_stories: int
    n_chars: int
    ppl_model: float
    ppl_control: float
    ratio: float
    keep: bool


def char_perplexity(backend: Backend, texts: Sequence[str]) -> float:
    """exp of total negative log-likelihood (nats) per character."""
    total_nats = 0.0
    total_chars = 0
    for text in texts:
        scored = backend.score([], text)
        total_nats += -sum(scored.logprobs)
        total_chars += len(text)
    if total_chars == 0:
        raise JobError("cannot screen empty text")
    return math.exp(total_nats / total_chars)


def perplexity_screen(
    stories: Sequence[InputStory],
    model: Backend,
    random_baseline: Backend,
    threshold: float = 0.9,
) -> list[LanguageScreenReport]:
    by_language: dict[str, list[str]] = {}
    for story in stories:
        texts = by_language.setdefault(story.language, [])
        texts.extend(p.text for p in story.paragraphs)
    reports = []
    counts: dict[str, int] = {}
    for story in stories:
        counts[story.language] = counts.get(story.language, 0) + 1
    for language in sorted(by_language):
        texts = by_language[language]
        ppl_model = char_perplexity(model, texts)
        ppl_control = char_perplexity(random_baseline, texts)
        ratio = ppl_model / ppl_control
        reports.append(
            LanguageScreenReport(
                language=language,
                n_stories=counts[language],
                n_chars=sum(len(t) for t in texts),
                ppl_model=ppl_model,
                ppl_control=ppl_control,
                ratio=ratio,
                keep=ratio < threshold,
            )
        )
    return reports
