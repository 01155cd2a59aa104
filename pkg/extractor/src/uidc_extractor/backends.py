"""Scoring backends: the model interface and a deterministic mock.

A backend tokenizes a target text and scores it under a context made of
interleaved text and image segments, returning natural-log probabilities per
piece plus, at every piece boundary, the total probability mass of
whitespace-initial continuations (used by the exact boundary correction).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

WS_MARKERS = ("▁", "Ġ", " ")

TEXT = "text"
IMAGE = "image"


class JobError(Exception):
    """Extraction cannot proceed (bad configuration, unusable model)."""


@dataclass(frozen=True)
class ContextSegment:
    kind: str  # TEXT or IMAGE
    value: str

    def __post_init__(self):
        if self.kind not in (TEXT, IMAGE):
            raise JobError(f"unknown context segment kind {self.kind!r}")


@dataclass(frozen=True)
class Piece:
    """A subword piece of the target text; the span may cover a leading space."""

    text: str
    span: tuple[int, int]


@dataclass(frozen=True)
class ScoredTarget:
    pieces: tuple[Piece, ...]
    logprobs: tuple[float, ...]  # natural log p(piece | context, prefix)
    ws_mass: tuple[float, ...]   # len(pieces)+1 boundary masses; last includes EOS

    def __post_init__(self):
        if not (len(self.pieces) == len(self.logprobs) == len(self.ws_mass) - 1):
            raise JobError("inconsistent scored-target arrays")


class Backend:
    """Interface; concrete backends implement tokenize/score/context_length."""

    name = "abstract"
    supports_images = False
    max_context_tokens = 4096

    def tokenize(self, text: str) -> list[Piece]:
        raise NotImplementedError

    def count_tokens(self, text: str) -> int:
        return len(self.tokenize(text))

    def score(self, context: Sequence[ContextSegment], target: str) -> ScoredTarget:
        raise NotImplementedError


def _unit_interval(key: str) -> float:
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


class MockBackend(Backend):
    """Deterministic stand-in model with grounded-like behaviour.

    Piece scores derive from content hashes; an image covering the current
    target pulls scores toward the target mean (factor ``image_shrink``), and
    any textual history pulls with ``discourse_shrink``. Empty context
    reproduces the isolation scores exactly, so discourse scoring of a
    story-initial paragraph equals its isolation scores by construction.
    """

    name = "mock"
    supports_images = True

    def __init__(self, max_context_tokens: int = 4096,
                 image_shrink: float = 0.75, discourse_shrink: float = 0.8,
                 seed: str = "0"):
        self.max_context_tokens = max_context_tokens
        self.image_shrink = image_shrink
        self.discourse_shrink = discourse_shrink
        self.seed = seed

    def tokenize(self, text: str) -> list[Piece]:
        pieces: list[Piece] = []
        word_start = None
        for i, ch in enumerate(list(text) + [" "]):
            if ch.isspace():
                if word_start is None:
                    continue
                start, end = word_start, i
                word = text[start:end]
                span_start = start - 1 if start > 0 else start
                if len(word) >= 6:
                    mid = start + len(word) // 2
                    pieces.append(Piece("▁" + text[start:mid], (span_start, mid)))
                    pieces.append(Piece(text[mid:end], (mid, end)))
                else:
                    pieces.append(Piece("▁" + word, (span_start, end)))
                word_start = None
            elif word_start is None:
                word_start = i
        return pieces

    def _base_bits(self, piece: Piece, index: int) -> float:
        return 0.5 + 14.0 * _unit_interval(f"{self.seed}|{piece.text}|{index}")

    def score(self, context: Sequence[ContextSegment], target: str) -> ScoredTarget:
        pieces = self.tokenize(target)
        if not pieces:
            raise JobError("cannot score empty target text")
        bits = [self._base_bits(p, i) for i, p in enumerate(pieces)]
        has_text = any(seg.kind == TEXT for seg in context)
        has_image = any(seg.kind == IMAGE for seg in context)
        factor = 1.0
        if has_text:
            factor *= self.discourse_shrink
        if has_image:
            factor *= self.image_shrink
        if factor < 1.0:
            mean = sum(bits) / len(bits)
            bits = [mean + factor * (b - mean) for b in bits]
        logprobs = [-b * math.log(2.0) for b in bits]
        ws_mass = []
        for j in range(len(pieces) + 1):
            if 0 < j < len(pieces) and pieces[j].text.startswith(WS_MARKERS):
                p_next = math.exp(logprobs[j])
                h = _unit_interval(f"{self.seed}|ws|{pieces[j].text}|{j}")
                ws_mass.append(p_next + (1.0 - p_next) * (0.2 + 0.6 * h))
            else:
                h = _unit_interval(f"{self.seed}|ws|{j}|{len(pieces)}")
                ws_mass.append(0.2 + 0.6 * h)
        return ScoredTarget(tuple(pieces), tuple(logprobs), tuple(ws_mass))


class RandomEmbeddingBackend(MockBackend):
    """Control model: context-blind scores from an independent hash stream."""

    name = "random-control"

    def __init__(self, max_context_tokens: int = 4096, seed: str = "ctrl"):
        super().__init__(max_context_tokens=max_context_tokens,
                         image_shrink=1.0, discourse_shrink=1.0, seed=seed)

    def _base_bits(self, piece: Piece, index: int) -> float:
        return 9.0 + 6.0 * _unit_interval(f"{self.seed}|rand|{piece.text}|{index}")


def build_backend(name: str, model_id: str | None = None, **kwargs) -> Backend:
    if name == "mock":
        return MockBackend(**kwargs)
    if name == "random-control":
        return RandomEmbeddingBackend(**kwargs)
    if name == "hf":
        from .hf_backend import HFBackend

        if not model_id:
            raise JobError("the hf backend requires a model identifier")
        return HFBackend(model_id, **kwargs)
    raise JobError(f"unknown backend {name!r}")
