"""Scoring orchestration: conditions, boundary correction, trace emission.

For every paragraph of every input story, the backend scores the paragraph
text under each requested condition:

* ``U``  - no context;
* ``P``  - the paragraph's own image;
* ``D``  - all preceding paragraph texts;
* ``PD`` - preceding paragraphs interleaved with their images, plus the
  current image.

Log-probabilities arrive in nats and are stored as bits. The exact
whitespace correction redistributes, at every word boundary whose opening
piece carries a leading-space marker, the whitespace probability mass to the
preceding word, and closes the final word with the end-of-word mass; totals
change only by that final closure term and every stored value stays
non-negative. Discourse history that exceeds the model context is truncated
from the left and the truncation is stamped into the record's source field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .backends import (
    IMAGE,
    TEXT,
    Backend,
    ContextSegment,
    JobError,
    Piece,
    WS_MARKERS,
)
from .datasets import DATASET_CAPTIONS, DATASET_VIST, InputStory
from .segment import Span, get_segmenter

LN2 = math.log(2.0)

CONDITIONS = ("U", "P", "D", "PD")
CAPTION_CONDITIONS = ("U", "P")

WS_NONE = "none"
WS_EXACT = "exact"


@dataclass(frozen=True)
class ExtractionJob:
    dataset: str
    model: str = "mock"
    conditions: tuple[str, ...] = ("U", "P")
    whitespace_correction: str = WS_EXACT
    segmenter_by_language: dict[str, str] = field(default_factory=dict)
    device: str = "cpu"
    batch_size: int = 8
    out_path: str = "trace.jsonl"

    def __post_init__(self):
        if self.dataset not in (DATASET_CAPTIONS, DATASET_VIST):
            raise JobError(f"unknown dataset kind {self.dataset!r}")
        allowed = CAPTION_CONDITIONS if self.dataset == DATASET_CAPTIONS else CONDITIONS
        for cond in self.conditions:
            if cond not in allowed:
                raise JobError(
                    f"condition {cond} is not available for {self.dataset} data"
                )
        if not self.conditions:
            raise JobError("at least one condition is required")
        if self.whitespace_correction not in (WS_NONE, WS_EXACT):
            raise JobError(
                f"unknown whitespace correction {self.whitespace_correction!r}"
            )


def build_context(
    story: InputStory, paragraph_index: int, condition: str
) -> list[ContextSegment]:
    paragraph = story.paragraphs[paragraph_index]
    if condition == "U":
        return []
    if condition == "P":
        if paragraph.image is None:
            raise JobError(
                f"story {story.story_id!r} paragraph {paragraph_index}: "
                "image required for the P condition"
            )
        return [ContextSegment(IMAGE, paragraph.image)]
    if condition == "D":
        return [
            ContextSegment(TEXT, story.paragraphs[i].text)
            for i in range(paragraph_index)
        ]
    if condition == "PD":
        if paragraph.image is None:
            raise JobError(
                f"story {story.story_id!r} paragraph {paragraph_index}: "
                "image required for the PD condition"
            )
        segments: list[ContextSegment] = []
        for i in range(paragraph_index):
            previous = story.paragraphs[i]
            if previous.image is not None:
                segments.append(ContextSegment(IMAGE, previous.image))
            segments.append(ContextSegment(TEXT, previous.text))
        segments.append(ContextSegment(IMAGE, paragraph.image))
        return segments
    raise JobError(f"unknown condition {condition!r}")


def truncate_context(
    segments: list[ContextSegment], backend: Backend, target: str
) -> tuple[list[ContextSegment], bool]:
    """Drop oldest history until the text budget fits the model context."""

    def total(segs: list[ContextSegment]) -> int:
        return sum(backend.count_tokens(s.value) for s in segs if s.kind == TEXT)

    budget = backend.max_context_tokens - backend.count_tokens(target)
    if budget < 0:
        raise JobError("target text alone exceeds the model context window")
    truncated = False
    segments = list(segments)
    while segments and total(segments) > budget:
        del segments[0]
        truncated = True
    return segments, truncated


def piece_owners(text: str, pieces: Sequence[Piece], word_spans: Sequence[Span]) -> list[int]:
    """Word index owning each piece (anchor: first visible character)."""
    owners = []
    starts = [s for s, _ in word_spans]
    ends = [e for _, e in word_spans]
    for piece in pieces:
        s, e = piece.span
        visible = [i for i in range(s, e) if not text[i].isspace()]
        if not visible:
            nxt = next((w for w, ws in enumerate(starts) if ws >= e), None)
            owners.append(nxt if nxt is not None else len(word_spans) - 1)
            continue
        owner = next(
            (w for w, (ws, we) in enumerate(word_spans) if ws <= visible[0] < we), None
        )
        if owner is None:
            raise JobError(f"piece {piece.text!r} is not inside any word")
        if visible[-1] >= ends[owner]:
            raise JobError(f"piece {piece.text!r} spans two words")
        owners.append(owner)
    for prev, cur in zip(owners, owners[1:]):
        if cur < prev:
            raise JobError("piece-to-word assignment is not monotone")
    return owners


def apply_ws_correction(
    bits: list[float], pieces: Sequence[Piece], owners: Sequence[int],
    ws_mass: Sequence[float],
) -> list[float]:
    """Redistribute whitespace mass to the preceding word; close the last word.

    At each word boundary whose first piece is marker-initial, the boundary
    mass ``B`` moves from that piece to the previous one (both stay
    non-negative because ``B`` is at least the piece's own probability). The
    final boundary's end-of-word mass is added to the last piece.
    """
    out = list(bits)
    for j in range(1, len(pieces)):
        if owners[j] != owners[j - 1] and pieces[j].text.startswith(WS_MARKERS):
            boundary_bits = -math.log(ws_mass[j]) / LN2
            moved = min(boundary_bits, out[j])
            out[j] -= moved
            out[j - 1] += moved
    out[-1] += -math.log(ws_mass[len(pieces)]) / LN2
    return out


def score_story(story: InputStory, job: ExtractionJob, backend: Backend) -> dict:
    """Score one story under all requested conditions; return a trace record."""
    if any(c in ("P", "PD") for c in job.conditions) and not backend.supports_images:
        raise JobError(f"backend {backend.name} cannot score image conditions")
    if "PD" in job.conditions and len(story.paragraphs) < 2:
        raise JobError(
            f"story {story.story_id!r}: PD requires at least two paragraphs"
        )
    segmenter = get_segmenter(job.segmenter_by_language, story.language)

    text_parts: list[str] = []
    offsets: list[int] = []
    cursor = 0
    for i, paragraph in enumerate(story.paragraphs):
        if not paragraph.text.strip():
            raise JobError(f"story {story.story_id!r} paragraph {i}: empty text")
        if i > 0:
            text_parts.append("\n")
            cursor += 1
        offsets.append(cursor)
        text_parts.append(paragraph.text)
        cursor += len(paragraph.text)
    story_text = "".join(text_parts)

    tokens: list[dict] = []
    words: list[dict] = []
    sentences: list[dict] = []
    paragraphs_out: list[dict] = []
    any_truncated = False

    for p_index, paragraph in enumerate(story.paragraphs):
        offset = offsets[p_index]
        sentence_spans, word_spans = segmenter(paragraph.text)
        if not word_spans:
            raise JobError(f"story {story.story_id!r} paragraph {p_index}: no words")

        per_condition: dict[str, list[float]] = {}
        pieces: Sequence[Piece] | None = None
        owners: list[int] | None = None
        for condition in job.conditions:
            context = build_context(story, p_index, condition)
            context, truncated = truncate_context(context, backend, paragraph.text)
            any_truncated |= truncated
            scored = backend.score(context, paragraph.text)
            if pieces is None:
                pieces = scored.pieces
                owners = piece_owners(paragraph.text, pieces, word_spans)
            elif scored.pieces != tuple(pieces):
                raise JobError(
                    f"backend tokenization differs across conditions for "
                    f"story {story.story_id!r}"
                )
            bits = [-lp / LN2 for lp in scored.logprobs]
            if any(b < 0 for b in bits):
                raise JobError("backend produced a probability above one")
            if job.whitespace_correction == WS_EXACT:
                bits = apply_ws_correction(bits, pieces, owners, scored.ws_mass)
            per_condition[condition] = bits

        first_token = len(tokens)
        for j, piece in enumerate(pieces):
            tokens.append(
                {
                    "t": piece.text,
                    "span": [piece.span[0] + offset, piece.span[1] + offset],
                    "s": {c: per_condition[c][j] for c in job.conditions},
                }
            )
        first_word_index = len(words)
        for w, (ws, we) in enumerate(word_spans):
            owned = [j for j, owner in enumerate(owners) if owner == w]
            if not owned:
                raise JobError(f"word span {(ws, we)} owns no pieces")
            words.append(
                {
                    "span": [ws + offset, we + offset],
                    "tok": [first_token + owned[0], first_token + owned[-1] + 1],
                }
            )
        first_sentence = len(sentences)
        for s_start, s_end in sentence_spans:
            in_sentence = [
                w for w, (ws, _we) in enumerate(word_spans) if s_start <= ws < s_end
            ]
            if not in_sentence:
                continue
            sentences.append(
                {
                    "w": [
                        first_word_index + in_sentence[0],
                        first_word_index + in_sentence[-1] + 1,
                    ]
                }
            )
        if len(sentences) == first_sentence:
            raise JobError(
                f"story {story.story_id!r} paragraph {p_index}: no sentences"
            )
        paragraph_obj: dict = {"s": [first_sentence, len(sentences)]}
        if paragraph.image is not None:
            paragraph_obj["image"] = paragraph.image
        paragraphs_out.append(paragraph_obj)

    source = f"{job.dataset}:{backend.name}+ws-{job.whitespace_correction}"
    if any_truncated:
        source += "+truncated"
    return {
        "story_id": story.story_id,
        "language": story.language,
        "source": source,
        "text": story_text,
        "tokens": tokens,
        "words": words,
        "sentences": sentences,
        "paragraphs": paragraphs_out,
    }


def score_conditions(
    stories: Sequence[InputStory], job: ExtractionJob, backend: Backend
) -> int:
    """Score every story and append trace lines to ``job.out_path``."""
    written = 0
    with open(job.out_path, "w", encoding="utf-8") as handle:
        for story in stories:
            record = score_story(story, job, backend)
            handle.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
            handle.write("\n")
            written += 1
    return written
