"""Sequence-level ASR confidence estimation, confidence-driven data selection
and KL-regularised acoustic-model adaptation on synthetic corpora."""

__version__ = "0.1.0"
