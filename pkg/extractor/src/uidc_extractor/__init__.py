"""Model-facing adapter: scores corpora under context conditions, emits uidc traces."""

__version__ = "0.1.0"
