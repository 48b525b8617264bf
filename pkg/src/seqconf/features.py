"""Per-word confidence features, context stacking and normalisation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Utterance, WordHyp
from .errors import DataError

BASE_DIM = 4
STD_FLOOR = 1e-6


@dataclass(frozen=True)
class ContextConfig:
    past: int = 0
    future: int = 0

    def __post_init__(self):
        if self.past < 0 or self.future < 0:
            raise ValueError("context window sizes must be >= 0")

    @property
    def width(self) -> int:
        return self.past + 1 + self.future

    def stacked_dim(self, d: int = BASE_DIM) -> int:
        return d * self.width


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": [float(x) for x in self.mean], "std": [float(x) for x in self.std]}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def featurize(word: WordHyp) -> np.ndarray:
    """(am_score, lm_score, ln duration_ms, phone_count)."""
    return np.array(
        [word.am_score, word.lm_score, math.log(word.duration_ms), float(word.phone_count)],
        dtype=np.float64,
    )


def featurize_utterance(utt: Utterance) -> np.ndarray:
    """Stack :func:`featurize` over the hypothesis, shape ``(N, 4)``."""
    if not utt.hypothesis:
        return np.zeros((0, BASE_DIM))
    return np.stack([featurize(w) for w in utt.hypothesis])


def stack_context(vectors: np.ndarray, cfg: ContextConfig) -> np.ndarray:
    """Concatenate each row with its ``past`` predecessors and ``future`` successors.

    Positions beyond the utterance boundary are zero-padded. Input shape
    ``(N, d)``, output ``(N, d * (past + 1 + future))``.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ValueError(f"stack_context expects a 2-D array, got shape {vectors.shape}")
    N, d = vectors.shape
    padded = np.zeros((N + cfg.past + cfg.future, d))
    padded[cfg.past : cfg.past + N] = vectors
    cols = [padded[k : k + N] for k in range(cfg.width)]
    return np.concatenate(cols, axis=1)


def fit_stats(vectors: np.ndarray) -> FeatureStats:
    """Per-dimension mean and population std, std floored at 1e-6."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] < 2:
        raise DataError("fit_stats needs at least 2 feature vectors")
    mean = vectors.mean(axis=0)
    std = np.maximum(vectors.std(axis=0), STD_FLOOR)
    return FeatureStats(mean, std)


def normalize(v: np.ndarray, stats: FeatureStats) -> np.ndarray:
    return (np.asarray(v, dtype=np.float64) - stats.mean) / stats.std


def denormalize(v: np.ndarray, stats: FeatureStats) -> np.ndarray:
    return stats.mean + np.asarray(v, dtype=np.float64) * stats.std


def corpus_vectors(utterances: Sequence[Utterance]) -> np.ndarray:
    rows = [featurize_utterance(u) for u in utterances if u.hypothesis]
    if not rows:
        return np.zeros((0, BASE_DIM))
    return np.concatenate(rows, axis=0)


def utterance_inputs(utt: Utterance, stats: FeatureStats, cfg: ContextConfig) -> np.ndarray:
    """Normalised, context-stacked model inputs for one utterance.

    Normalisation happens before stacking so that boundary padding sits at
    the feature mean.
    """
    base = featurize_utterance(utt)
    if base.shape[0] == 0:
        return np.zeros((0, cfg.stacked_dim()))
    return stack_context(normalize(base, stats), cfg)
