"""Embedding-based text classification against a per-label ground-truth vector store."""

__version__ = "0.1.0"
