"""Input readers for caption sets and visual stories (newline-delimited JSON).

Captions: one object per line with ``id``, ``language``, ``text`` and an
optional ``image``. Stories: ``id``, ``language`` and ``paragraphs``, a list
of objects with ``text`` and optional ``image``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .backends import JobError

DATASET_CAPTIONS = "captions"
DATASET_VIST = "vist"


@dataclass(frozen=True)
class InputParagraph:
    text: str
    image: str | None = None


@dataclass(frozen=True)
class InputStory:
    story_id: str
    language: str
    paragraphs: tuple[InputParagraph, ...]


def _require(record: dict, key: str, line: int):
    if key not in record:
        raise JobError(f"input line {line}: missing key {key!r}")
    return record[key]


def read_captions(path) -> list[InputStory]:
    out = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            out.append(
                InputStory(
                    story_id=str(_require(record, "id", line_number)),
                    language=str(_require(record, "language", line_number)),
                    paragraphs=(
                        InputParagraph(
                            text=str(_require(record, "text", line_number)),
                            image=record.get("image"),
                        ),
                    ),
                )
            )
    return out


def read_stories(path) -> list[InputStory]:
    out = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            paragraphs = tuple(
                InputParagraph(text=str(p["text"]), image=p.get("image"))
                for p in _require(record, "paragraphs", line_number)
            )
            if not paragraphs:
                raise JobError(f"input line {line_number}: story has no paragraphs")
            out.append(
                InputStory(
                    story_id=str(_require(record, "id", line_number)),
                    language=str(_require(record, "language", line_number)),
                    paragraphs=paragraphs,
                )
            )
    return out


def read_dataset(kind: str, path) -> list[InputStory]:
    if kind == DATASET_CAPTIONS:
        return read_captions(path)
    if kind == DATASET_VIST:
        return read_stories(path)
    raise JobError(f"unknown dataset kind {kind!r}")
