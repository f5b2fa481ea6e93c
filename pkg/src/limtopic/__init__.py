"""Limitation-section mining, guided topic modeling, and LLM titling/summarization."""

__version__ = "0.1.0"
