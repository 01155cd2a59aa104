"""Shared builders for hand-made and randomized story fixtures."""

from __future__ import annotations

import random

from uidc.trace import Condition, Paragraph, Sentence, Story, Token, Word, validate_story

UD_TAGS = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
]


def story_from_layout(
    layout: list[list[list[float]]] | list[list[list[dict[Condition, float]]]],
    story_id: str = "s1",
    language: str = "eng",
    source: str = "test",
    conditions: tuple[Condition, ...] = (Condition.U,),
    pos_tags: list[str | None] | None = None,
) -> Story:
    """Build a validated story from nested [paragraph][sentence][word] surprisal.

    Word entries may be plain floats (copied to every requested condition) or
    explicit condition maps. One token per word.
    """
    tokens: list[Token] = []
    words: list[Word] = []
    sentences: list[Sentence] = []
    paragraphs: list[Paragraph] = []
    parts: list[str] = []
    cursor = 0
    w_index = 0
    for p, sentence_list in enumerate(layout):
        first_sentence = len(sentences)
        for sentence in sentence_list:
            first_word = len(words)
            for value in sentence:
                text = f"w{w_index}"
                if parts:
                    parts.append(" ")
                    cursor += 1
                span = (cursor, cursor + len(text))
                parts.append(text)
                cursor += len(text)
                if isinstance(value, dict):
                    sup = {c: float(v) for c, v in value.items()}
                else:
                    sup = {c: float(value) for c in conditions}
                tokens.append(Token(text=text, char_span=span, surprisal=sup))
                words.append(
                    Word(
                        text=text,
                        char_span=span,
                        token_range=(w_index, w_index + 1),
                        pos_tag=pos_tags[w_index] if pos_tags else None,
                        surprisal=dict(sup),
                    )
                )
                w_index += 1
            sentences.append(Sentence(word_range=(first_word, len(words))))
        paragraphs.append(Paragraph(sentence_range=(first_sentence, len(sentences))))
    return validate_story(
        Story(
            story_id=story_id,
            language=language,
            source=source,
            text="".join(parts),
            tokens=tuple(tokens),
            words=tuple(words),
            sentences=tuple(sentences),
            paragraphs=tuple(paragraphs),
        )
    )


def random_story(rng: random.Random, story_id: str, language: str = "eng") -> Story:
    """A structurally random story with random sparse conditions and POS tags."""
    condition_sets = [
        (Condition.U,),
        (Condition.U, Condition.P),
        (Condition.U, Condition.P, Condition.D),
        (Condition.U, Condition.P, Condition.D, Condition.PD),
    ]
    n_paragraphs = rng.randint(1, 4)
    conditions = rng.choice(condition_sets)
    if Condition.PD in conditions and n_paragraphs < 2:
        n_paragraphs = 2
    layout = []
    for _p in range(n_paragraphs):
        layout.append(
            [
                [
                    {c: rng.uniform(0.0, 25.0) for c in conditions}
                    for _w in range(rng.randint(1, 8))
                ]
                for _s in range(rng.randint(1, 4))
            ]
        )
    n_words = sum(len(s) for p in layout for s in p)
    pos_tags = [rng.choice(UD_TAGS) if rng.random() < 0.8 else None for _ in range(n_words)]
    return story_from_layout(
        layout,
        story_id=story_id,
        language=language,
        conditions=conditions,
        pos_tags=pos_tags,
    )
