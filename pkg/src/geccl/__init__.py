"""Curriculum training for grammatical error correction driven by difficulty scores."""

__version__ = "0.1.0"
