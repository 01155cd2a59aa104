"""Word-level surprisal reconstruction from token-level traces.

Word surprisal is the sum of the surprisals of the tokens the word comprises.
Under the ``whitespace_reassign`` policy, tokens that consist solely of
whitespace markers and sit at the start of a word's token range are treated as
trailing material of the preceding word, so their mass moves left before
summation. Totals per condition are conserved exactly under both policies.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .errors import AlignmentError
from .trace import Span, Story, Token, Word

#: Leading-space markers used by common subword vocabularies.
DEFAULT_WHITESPACE_MARKERS = frozenset({"▁", " ", "Ġ"})

NAIVE_SUM = "naive_sum"
WHITESPACE_REASSIGN = "whitespace_reassign"


@dataclass(frozen=True)
class AlignmentPolicy:
    """How token surprisal is attributed to words; fixed for a whole run."""

    mode: str = NAIVE_SUM
    whitespace_markers: frozenset[str] = DEFAULT_WHITESPACE_MARKERS

    def __post_init__(self):
        if self.mode not in (NAIVE_SUM, WHITESPACE_REASSIGN):
            raise AlignmentError(f"unknown alignment mode {self.mode!r}")


def is_marker_only(text: str, markers: frozenset[str]) -> bool:
    """True if ``text`` is a non-empty concatenation of whitespace markers."""
    if not text:
        return False
    ordered = sorted(markers, key=len, reverse=True)
    pos = 0
    while pos < len(text):
        for marker in ordered:
            if text.startswith(marker, pos):
                pos += len(marker)
                break
        else:
            return False
    return True


def _token_owner_counts(story: Story) -> list[int]:
    """Per-word token counts, checking full coverage of the token list."""
    counts = []
    cursor = 0
    for i, word in enumerate(story.words):
        t0, t1 = word.token_range
        if t0 != cursor:
            raise AlignmentError(
                f"story {story.story_id!r}: token {cursor} is not assigned to any word"
            )
        counts.append(t1 - t0)
        cursor = t1
    if cursor != len(story.tokens):
        raise AlignmentError(
            f"story {story.story_id!r}: token {cursor} is not assigned to any word"
        )
    return counts


def aggregate_word_surprisal(story: Story, policy: AlignmentPolicy) -> Story:
    """Return a copy of ``story`` with ``Word.surprisal`` filled per condition.

    Requires every token to be assigned to exactly one word. Raises
    :class:`AlignmentError` on coverage gaps or when reassignment empties a word.
    """
    counts = _token_owner_counts(story)
    if policy.mode == WHITESPACE_REASSIGN:
        boundaries = [story.words[0].token_range[0]]
        for i, count in enumerate(counts):
            boundaries.append(boundaries[-1] + count)
        # Shift each word's start right past its leading marker-only tokens;
        # the first word keeps its tokens unconditionally.
        for i in range(1, len(story.words)):
            start, end = boundaries[i], boundaries[i + 1]
            while start < end and is_marker_only(
                story.tokens[start].text, policy.whitespace_markers
            ):
                start += 1
            boundaries[i] = start
        ranges = [(boundaries[i], boundaries[i + 1]) for i in range(len(story.words))]
    else:
        ranges = [w.token_range for w in story.words]

    conditions = story.conditions()
    new_words = []
    for word, (t0, t1) in zip(story.words, ranges):
        if t0 >= t1:
            raise AlignmentError(
                f"story {story.story_id!r}: word {word.text!r} is empty after reassignment"
            )
        sums = {c: 0.0 for c in conditions}
        for tok in story.tokens[t0:t1]:
            for c in conditions:
                sums[c] += tok.surprisal[c]
        new_words.append(replace(word, surprisal=sums))
    return replace(story, words=tuple(new_words))


def fallback_segment(text: str) -> list[tuple[str, Span]]:
    """Split ``text`` on Unicode whitespace into (word, char_span) pairs.

    Punctuation stays attached to its word; runs of whitespace collapse.
    """
    words: list[tuple[str, Span]] = []
    start = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if start is not None:
                words.append((text[start:i], (start, i)))
                start = None
        elif start is None:
            start = i
    if start is not None:
        words.append((text[start:], (start, len(text))))
    return words


def assign_token_ranges(
    text: str,
    tokens: Sequence[Token],
    word_spans: Sequence[Span],
    pos_tags: Sequence[str | None] | None = None,
) -> list[Word]:
    """Build words over ``word_spans``, assigning each token to one of them.

    Used by trace producers when word segmentation is absent: spans typically
    come from :func:`fallback_segment`. A token is anchored by its first
    non-whitespace character; marker-only tokens anchor to the following word
    (the reassignment policy can move them back), except at end of text where
    they join the last word. A token whose visible characters straddle two
    words is rejected.
    """
    if not word_spans:
        raise AlignmentError("no word spans to assign tokens to")
    starts = [s for s, _ in word_spans]
    ends = [e for _, e in word_spans]

    def word_of(pos: int) -> int:
        for i, (s, e) in enumerate(word_spans):
            if s <= pos < e:
                return i
        raise AlignmentError(f"token at char {pos} is not inside any word")

    owners = []
    for tok in tokens:
        s, e = tok.char_span
        visible = [i for i in range(s, e) if not text[i].isspace()]
        if not visible:
            nxt = next((i for i, ws in enumerate(starts) if ws >= e), None)
            owners.append(nxt if nxt is not None else len(word_spans) - 1)
            continue
        owner = word_of(visible[0])
        if visible[-1] >= ends[owner]:
            raise AlignmentError(f"token {tok.text!r} spans two words")
        owners.append(owner)
    for prev, cur in zip(owners, owners[1:]):
        if cur < prev:
            raise AlignmentError("token assignment is not monotone")

    words = []
    cursor = 0
    for i, span in enumerate(word_spans):
        first = cursor
        while cursor < len(owners) and owners[cursor] == i:
            cursor += 1
        if first == cursor:
            raise AlignmentError(f"word span {span} owns no tokens")
        words.append(
            Word(
                text=text[span[0]:span[1]],
                char_span=span,
                token_range=(first, cursor),
                pos_tag=pos_tags[i] if pos_tags is not None else None,
            )
        )
    if cursor != len(owners):
        raise AlignmentError("trailing tokens own no word")
    return words
