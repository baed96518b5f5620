"""Explainable retrieval-augmented question answering over threat-intel corpora."""

__version__ = "0.1.0"
