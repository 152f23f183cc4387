"""Temporal IR workbench: snapshot corpora, BM25 two-stage retrieval, nDCG drift and topic drift."""

__version__ = "0.1.0"
