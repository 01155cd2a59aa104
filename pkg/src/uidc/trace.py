"""Document data model and the newline-delimited JSON trace interchange format.

A :class:`Story` is the universal record: a document's text, its token and
word segmentations with per-condition surprisal (in bits), and the
sentence/paragraph hierarchy expressed as half-open index ranges. Stories are
frozen after validation and safe to share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import IO, Iterable, Iterator, Mapping

from .errors import TraceParseError, TraceValidationError


class Condition(str, Enum):
    """Scoring context: isolation, paired image, preceding discourse, or both."""

    U = "U"
    P = "P"
    D = "D"
    PD = "PD"


CONDITION_ORDER = (Condition.U, Condition.P, Condition.D, Condition.PD)

#: The 17 Universal Dependencies part-of-speech tags.
UD_POS_TAGS = frozenset(
    {
        "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
        "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
    }
)

Span = tuple[int, int]


@dataclass(frozen=True)
class Token:
    """A subword unit with its character span and per-condition surprisal (bits)."""

    text: str
    char_span: Span
    surprisal: Mapping[Condition, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Word:
    """A word owning a contiguous token range; surprisal is filled by alignment."""

    text: str
    char_span: Span
    token_range: Span
    pos_tag: str | None = None
    surprisal: Mapping[Condition, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Sentence:
    word_range: Span


@dataclass(frozen=True)
class Paragraph:
    sentence_range: Span
    image_ref: str | None = None


@dataclass(frozen=True)
class Story:
    """One document: flat token/word/sentence/paragraph lists plus identity."""

    story_id: str
    language: str
    source: str
    text: str
    tokens: tuple[Token, ...]
    words: tuple[Word, ...]
    sentences: tuple[Sentence, ...]
    paragraphs: tuple[Paragraph, ...]

    def conditions(self) -> tuple[Condition, ...]:
        """Conditions carried by this story's tokens, in canonical order."""
        if not self.tokens:
            return ()
        present = set(self.tokens[0].surprisal.keys())
        return tuple(c for c in CONDITION_ORDER if c in present)

    def paragraph_word_range(self, p_index: int) -> Span:
        para = self.paragraphs[p_index]
        first = self.sentences[para.sentence_range[0]].word_range[0]
        last = self.sentences[para.sentence_range[1] - 1].word_range[1]
        return (first, last)


def _check(cond: bool, story_id: str, field_name: str, message: str) -> None:
    if not cond:
        raise TraceValidationError(story_id, field_name, message)


def _check_surprisal_map(
    sup: Mapping[Condition, float], story_id: str, field_name: str
) -> None:
    for cond, value in sup.items():
        _check(
            isinstance(value, (int, float)) and value == value and value != float("inf"),
            story_id, field_name, f"surprisal for {cond.value} is not a finite number",
        )
        _check(value >= 0.0, story_id, field_name, f"negative surprisal {value} for {cond.value}")


def validate_story(story: Story) -> Story:
    """Enforce every structural invariant; return the story unchanged.

    Raises :class:`TraceValidationError` naming the story and offending field.
    """
    sid = story.story_id
    _check(bool(sid), sid, "story_id", "empty story_id")
    _check(
        len(story.language) == 3 and story.language.isalpha() and story.language.islower(),
        sid, "language", f"not an ISO-639-3 code: {story.language!r}",
    )
    n_chars = len(story.text)

    _check(len(story.tokens) > 0, sid, "tokens", "story has no tokens")
    cond_set = set(story.tokens[0].surprisal.keys())
    prev_end = 0
    for i, tok in enumerate(story.tokens):
        start, end = tok.char_span
        _check(0 <= start < end <= n_chars, sid, "tokens",
               f"token {i} span {tok.char_span} is empty or out of bounds")
        _check(start >= prev_end, sid, "tokens",
               f"token {i} span {tok.char_span} overlaps the previous token")
        prev_end = end
        _check_surprisal_map(tok.surprisal, sid, "tokens")
        _check(set(tok.surprisal.keys()) == cond_set, sid, "tokens",
               f"token {i} carries a different condition set than token 0")
    if Condition.PD in cond_set:
        _check(len(story.paragraphs) >= 2, sid, "tokens",
               "PD condition requires at least two paragraphs (discourse history)")

    _check(len(story.words) > 0, sid, "words", "story has no words")
    prev_char_end = 0
    prev_tok_end = 0
    for i, word in enumerate(story.words):
        start, end = word.char_span
        _check(0 <= start < end <= n_chars, sid, "words",
               f"word {i} span {word.char_span} is empty or out of bounds")
        _check(start >= prev_char_end, sid, "words",
               f"word {i} span {word.char_span} overlaps the previous word")
        prev_char_end = end
        t0, t1 = word.token_range
        _check(0 <= t0 < t1 <= len(story.tokens), sid, "words",
               f"word {i} token_range {word.token_range} is empty or out of bounds")
        _check(t0 >= prev_tok_end, sid, "words",
               f"word {i} token_range {word.token_range} overlaps the previous word's")
        prev_tok_end = t1
        if word.pos_tag is not None:
            _check(word.pos_tag in UD_POS_TAGS, sid, "words",
                   f"word {i} has unknown POS tag {word.pos_tag!r}")
        _check_surprisal_map(word.surprisal, sid, "words")

    _check(len(story.sentences) > 0, sid, "sentences", "story has no sentences")
    cursor = 0
    for i, sent in enumerate(story.sentences):
        w0, w1 = sent.word_range
        _check(w0 == cursor and w0 < w1 <= len(story.words), sid, "sentences",
               f"sentence {i} word_range {sent.word_range} does not tile the word list")
        cursor = w1
    _check(cursor == len(story.words), sid, "sentences",
           "sentences do not cover every word")

    _check(len(story.paragraphs) > 0, sid, "paragraphs", "story has no paragraphs")
    cursor = 0
    for i, para in enumerate(story.paragraphs):
        s0, s1 = para.sentence_range
        _check(s0 == cursor and s0 < s1 <= len(story.sentences), sid, "paragraphs",
               f"paragraph {i} sentence_range {para.sentence_range} does not tile the sentence list")
        cursor = s1
    _check(cursor == len(story.sentences), sid, "paragraphs",
           "paragraphs do not cover every sentence")
    return story


# --- JSON (de)serialization -------------------------------------------------

def _span_from_json(obj: object, sid: str, field_name: str) -> Span:
    if (
        not isinstance(obj, list)
        or len(obj) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in obj)
    ):
        raise TraceValidationError(sid, field_name, f"span must be a pair of ints, got {obj!r}")
    return (obj[0], obj[1])


def _surprisal_from_json(obj: object, sid: str, field_name: str) -> dict[Condition, float]:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise TraceValidationError(sid, field_name, f"surprisal map must be an object, got {obj!r}")
    out: dict[Condition, float] = {}
    for key, value in obj.items():
        try:
            cond = Condition(key)
        except ValueError:
            raise TraceValidationError(sid, field_name, f"unknown condition key {key!r}") from None
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise TraceValidationError(sid, field_name, f"surprisal for {key} is not a number")
        out[cond] = float(value)
    return out


def _story_from_json(record: dict, sid: str) -> Story:
    text = record.get("text")
    if not isinstance(text, str):
        raise TraceValidationError(sid, "text", "missing or non-string text")
    language = record.get("language")
    source = record.get("source")
    if not isinstance(language, str):
        raise TraceValidationError(sid, "language", "missing or non-string language")
    if not isinstance(source, str):
        raise TraceValidationError(sid, "source", "missing or non-string source")

    tokens = []
    for obj in record.get("tokens", []):
        tokens.append(
            Token(
                text=obj.get("t", ""),
                char_span=_span_from_json(obj.get("span"), sid, "tokens"),
                surprisal=_surprisal_from_json(obj.get("s"), sid, "tokens"),
            )
        )
    words = []
    for obj in record.get("words", []):
        span = _span_from_json(obj.get("span"), sid, "words")
        words.append(
            Word(
                text=text[span[0]:span[1]],
                char_span=span,
                token_range=_span_from_json(obj.get("tok"), sid, "words"),
                pos_tag=obj.get("pos"),
                surprisal=_surprisal_from_json(obj.get("s"), sid, "words"),
            )
        )
    sentences = [
        Sentence(word_range=_span_from_json(obj.get("w"), sid, "sentences"))
        for obj in record.get("sentences", [])
    ]
    paragraphs = [
        Paragraph(
            sentence_range=_span_from_json(obj.get("s"), sid, "paragraphs"),
            image_ref=obj.get("image"),
        )
        for obj in record.get("paragraphs", [])
    ]
    return Story(
        story_id=sid,
        language=language,
        source=source,
        text=text,
        tokens=tuple(tokens),
        words=tuple(words),
        sentences=tuple(sentences),
        paragraphs=tuple(paragraphs),
    )


def _story_to_json(story: Story) -> dict:
    def sup(mapping: Mapping[Condition, float]) -> dict | None:
        if not mapping:
            return None
        return {c.value: mapping[c] for c in CONDITION_ORDER if c in mapping}

    tokens = []
    for tok in story.tokens:
        obj: dict = {"t": tok.text, "span": list(tok.char_span)}
        s = sup(tok.surprisal)
        if s is not None:
            obj["s"] = s
        tokens.append(obj)
    words = []
    for word in story.words:
        obj = {"span": list(word.char_span), "tok": list(word.token_range)}
        if word.pos_tag is not None:
            obj["pos"] = word.pos_tag
        s = sup(word.surprisal)
        if s is not None:
            obj["s"] = s
        words.append(obj)
    return {
        "story_id": story.story_id,
        "language": story.language,
        "source": story.source,
        "text": story.text,
        "tokens": tokens,
        "words": words,
        "sentences": [{"w": list(s.word_range)} for s in story.sentences],
        "paragraphs": [
            {"s": list(p.sentence_range)}
            if p.image_ref is None
            else {"s": list(p.sentence_range), "image": p.image_ref}
            for p in story.paragraphs
        ],
    }


def _iter_lines(stream: IO | Iterable) -> Iterator[str]:
    for raw in stream:
        if isinstance(raw, bytes):
            yield raw.decode("utf-8")
        else:
            yield raw


def read_trace(stream: IO | Iterable) -> list[Story]:
    """Parse and validate one Story per newline-delimited JSON line.

    Accepts a binary or text file-like object (or any iterable of lines).
    Raises :class:`TraceParseError` on malformed JSON and
    :class:`TraceValidationError` on invariant violations, including a
    duplicate story_id within one (language, source).
    """
    stories: list[Story] = []
    seen: set[tuple[str, str, str]] = set()
    for line_number, line in enumerate(_iter_lines(stream), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceParseError(line_number, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(record, dict):
            raise TraceParseError(line_number, "record is not a JSON object")
        sid = record.get("story_id")
        if not isinstance(sid, str) or not sid:
            raise TraceParseError(line_number, "missing or empty story_id")
        story = validate_story(_story_from_json(record, sid))
        key = (story.language, story.source, story.story_id)
        if key in seen:
            raise TraceValidationError(sid, "story_id", f"duplicate story_id for {key[:2]}")
        seen.add(key)
        stories.append(story)
    return stories


def scan_trace(stream: IO | Iterable) -> tuple[list[Story], list[tuple[int, str]]]:
    """Lenient pass over a trace: valid stories plus (line, message) violations.

    Unlike :func:`read_trace` this does not stop at the first problem; it is
    the engine behind corpus validation reports.
    """
    stories: list[Story] = []
    violations: list[tuple[int, str]] = []
    seen: set[tuple[str, str, str]] = set()
    for line_number, line in enumerate(_iter_lines(stream), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise TraceParseError(line_number, "record is not a JSON object")
            sid = record.get("story_id")
            if not isinstance(sid, str) or not sid:
                raise TraceParseError(line_number, "missing or empty story_id")
            story = validate_story(_story_from_json(record, sid))
            key = (story.language, story.source, story.story_id)
            if key in seen:
                raise TraceValidationError(sid, "story_id", f"duplicate story_id for {key[:2]}")
            seen.add(key)
            stories.append(story)
        except json.JSONDecodeError as exc:
            violations.append((line_number, f"invalid JSON: {exc.msg}"))
        except (TraceParseError, TraceValidationError) as exc:
            violations.append((line_number, str(exc)))
    return stories, violations


def write_trace(stories: Iterable[Story], stream: IO) -> None:
    """Serialize stories as UTF-8 newline-delimited JSON (full float precision).

    Round-trip identity holds: ``read_trace`` on the output reproduces the
    input field-for-field.
    """
    try:
        stream.write("")
        binary = False
    except TypeError:
        binary = True
    for story in stories:
        line = json.dumps(_story_to_json(story), ensure_ascii=False, separators=(",", ":")) + "\n"
        if binary:
            stream.write(line.encode("utf-8"))
        else:
            stream.write(line)


def read_trace_path(path) -> list[Story]:
    with open(path, "rb") as handle:
        return read_trace(handle)


def write_trace_path(stories: Iterable[Story], path) -> None:
    with open(path, "wb") as handle:
        write_trace(stories, handle)


# --- Corpus-level ingestion filters ------------------------------------------

def _truncate_story(story: Story, max_paragraphs: int) -> Story:
    if len(story.paragraphs) <= max_paragraphs:
        return story
    paragraphs = story.paragraphs[:max_paragraphs]
    n_sentences = paragraphs[-1].sentence_range[1]
    sentences = story.sentences[:n_sentences]
    n_words = sentences[-1].word_range[1]
    words = story.words[:n_words]
    n_tokens = words[-1].token_range[1]
    tokens = story.tokens[:n_tokens]
    return validate_story(
        replace(story, tokens=tokens, words=words, sentences=sentences, paragraphs=paragraphs)
    )


def filter_corpus(
    stories: Iterable[Story],
    min_stories_per_language: int = 20,
    max_paragraphs: int = 20,
    min_words_per_paragraph: int = 3,
) -> list[Story]:
    """Apply the ingestion filters: truncate long stories, drop stories with a
    too-short paragraph, then drop languages without strictly more than
    ``min_stories_per_language`` surviving stories. Idempotent.
    """
    kept: list[Story] = []
    for story in stories:
        story = _truncate_story(story, max_paragraphs)
        shortest = min(
            story.paragraph_word_range(i)[1] - story.paragraph_word_range(i)[0]
            for i in range(len(story.paragraphs))
        )
        if shortest < min_words_per_paragraph:
            continue
        kept.append(story)
    counts: dict[str, int] = {}
    for story in kept:
        counts[story.language] = counts.get(story.language, 0) + 1
    return [s for s in kept if counts[s.language] > min_stories_per_language]
