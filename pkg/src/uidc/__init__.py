"""Corpus toolkit for surprisal uniformity, reduction contours, and boundary statistics."""

__version__ = "0.1.0"

from .trace import Condition, Paragraph, Sentence, Story, Token, Word  # noqa: F401
