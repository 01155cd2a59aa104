"""Word and sentence segmentation with a per-language registry.

The universal fallback splits words on Unicode whitespace (punctuation stays
attached) and sentences on terminal punctuation. External segmenters can be
registered under a name and selected per language in the extraction job.
"""

from __future__ import annotations

from typing import Callable

from .backends import JobError

Span = tuple[int, int]

SENTENCE_TERMINATORS = set(".!?。！？")


def whitespace_words(text: str) -> list[Span]:
    spans: list[Span] = []
    start = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if start is not None:
                spans.append((start, i))
                start = None
        elif start is None:
            start = i
    if start is not None:
        spans.append((start, len(text)))
    return spans


def naive_sentences(text: str) -> list[Span]:
    """Spans of sentences split after terminal punctuation runs."""
    spans: list[Span] = []
    start = 0
    i = 0
    while i < len(text):
        if text[i] in SENTENCE_TERMINATORS:
            while i + 1 < len(text) and text[i + 1] in SENTENCE_TERMINATORS:
                i += 1
            end = i + 1
            if text[start:end].strip():
                spans.append((start, end))
            start = end
        i += 1
    if text[start:].strip():
        spans.append((start, len(text)))
    return spans


def segment_whitespace(text: str) -> tuple[list[Span], list[Span]]:
    return naive_sentences(text), whitespace_words(text)


Segmenter = Callable[[str], tuple[list[Span], list[Span]]]

_REGISTRY: dict[str, Segmenter] = {"whitespace": segment_whitespace}


def register_segmenter(name: str, fn: Segmenter) -> None:
    _REGISTRY[name] = fn


def get_segmenter(choice_by_language: dict[str, str], language: str) -> Segmenter:
    name = choice_by_language.get(language, choice_by_language.get("*", "whitespace"))
    if name not in _REGISTRY:
        raise JobError(f"unsupported segmenter {name!r} for language {language!r}")
    return _REGISTRY[name]
