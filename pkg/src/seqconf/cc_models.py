"""Word-level MLP and sequence-level LSTM confidence classifiers.

The MLP scores each hypothesis word independently (with a small context
window) and is trained with binary cross-entropy on class-balanced words;
utterance confidence is the duration-weighted mean of word scores.

The LSTM reads the whole hypothesis left to right and regresses, at every
word ``n``, the running accuracy of the first ``n`` words
(:func:`seqconf.alignment.cumulative_labels`). Its last output is the
utterance confidence, so a score of 0.9 is meant to read as "about 90% of
the words are right".
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nn_core as nn
from .alignment import align, cumulative_labels, utterance_accuracy
from .corpus import ScoredUtterance, Utterance
from .errors import DataError
from .features import BASE_DIM, ContextConfig, FeatureStats, corpus_vectors, fit_stats, utterance_inputs

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MlpConfig:
    hidden_sizes: tuple[int, ...] = (32,)
    context: ContextConfig = ContextConfig(past=1, future=1)

    def to_dict(self):
        return {"hidden_sizes": list(self.hidden_sizes), "context": {"past": self.context.past, "future": self.context.future}}


@dataclass(frozen=True)
class LstmConfig:
    layers: int = 1
    cells: int = 32
    context: ContextConfig = ContextConfig(past=0, future=1)

    def __post_init__(self):
        if self.layers < 1 or self.cells < 1:
            raise ValueError("LSTM needs layers >= 1 and cells >= 1")

    def to_dict(self):
        return {
            "layers": self.layers,
            "cells": self.cells,
            "context": {"past": self.context.past, "future": self.context.future},
        }


@dataclass
class CcModel:
    kind: str  # "mlp" | "lstm"
    config: MlpConfig | LstmConfig
    params: nn.Params
    stats: FeatureStats
    train_config: nn.TrainConfig = field(default_factory=nn.TrainConfig)

    def save(self, path) -> None:
        nn.write_checkpoint(
            path,
            kind=self.kind,
            arch=self.config.to_dict(),
            stats=self.stats.to_dict(),
            params=self.params,
            extra={"train": self.train_config.to_dict()},
        )

    @classmethod
    def load(cls, path) -> "CcModel":
        doc = nn.read_checkpoint(path)
        arch = doc["arch"]
        ctx = ContextConfig(**arch["context"])
        if doc["kind"] == "mlp":
            cfg = MlpConfig(hidden_sizes=tuple(arch["hidden_sizes"]), context=ctx)
        elif doc["kind"] == "lstm":
            cfg = LstmConfig(layers=arch["layers"], cells=arch["cells"], context=ctx)
        else:
            raise DataError(f"{path}: unknown model kind {doc['kind']!r}")
        train = nn.TrainConfig(**doc["train"]) if "train" in doc else nn.TrainConfig()
        return cls(doc["kind"], cfg, doc["params"], FeatureStats.from_dict(doc["stats"]), train)


# -- MLP ----------------------------------------------------------------------


def init_mlp(cfg: MlpConfig, rng: np.random.Generator) -> nn.Params:
    sizes = [cfg.context.stacked_dim(BASE_DIM), *cfg.hidden_sizes, 1]
    params = {}
    for k in range(len(sizes) - 1):
        params[f"mlp.W{k}"] = nn.glorot_uniform(rng, sizes[k], sizes[k + 1])
        params[f"mlp.b{k}"] = np.zeros(sizes[k + 1])
    return params


def _n_layers(params: nn.Params) -> int:
    return sum(1 for k in params if k.startswith("mlp.W"))


def mlp_logits(params: nn.Params, X: np.ndarray):
    """Forward pass; returns logits of shape ``(B,)`` and the activations."""
    L = _n_layers(params)
    acts = [X]
    a = X
    for k in range(L):
        z = nn.affine_forward(a, params[f"mlp.W{k}"], params[f"mlp.b{k}"])
        a = np.tanh(z) if k < L - 1 else z
        acts.append(a)
    return a[:, 0], acts


def mlp_loss(params: nn.Params, X: np.ndarray, y: np.ndarray):
    """Mean binary cross-entropy over the batch and its gradients."""
    logits, acts = mlp_logits(params, X)
    B = X.shape[0]
    loss, dz = nn.bce_with_logits(logits, y)
    loss /= B
    da = (dz / B)[:, None]
    L = _n_layers(params)
    grads = {}
    for k in range(L - 1, -1, -1):
        if k < L - 1:
            da = da * (1.0 - acts[k + 1] ** 2)
        da_prev, grads[f"mlp.W{k}"], grads[f"mlp.b{k}"] = nn.affine_backward(da, acts[k], params[f"mlp.W{k}"])
        da = da_prev
    return loss, grads


def balance_classes(labels, seed: int) -> np.ndarray:
    """Indices of a class-balanced, shuffled subset of ``labels``.

    The majority class is downsampled without replacement to the minority
    count; every minority sample is kept.
    """
    labels = np.asarray(labels, dtype=bool)
    pos = np.flatnonzero(labels)
    neg = np.flatnonzero(~labels)
    if len(pos) == 0 or len(neg) == 0:
        raise DataError("class balancing needs both correct and incorrect samples")
    rng = np.random.default_rng(seed)
    n = min(len(pos), len(neg))
    if len(pos) > n:
        pos = np.sort(rng.choice(pos, size=n, replace=False))
    if len(neg) > n:
        neg = np.sort(rng.choice(neg, size=n, replace=False))
    idx = np.concatenate([pos, neg])
    return idx[rng.permutation(len(idx))]


def word_training_data(corpus: Sequence[Utterance], stats: FeatureStats, ctx: ContextConfig):
    """Stacked word inputs and Match/not-Match labels for every hypothesis word."""
    X, y = [], []
    for utt in corpus:
        if not utt.hypothesis:
            continue
        res = align(utt.reference, utt.hyp_tokens)
        X.append(utterance_inputs(utt, stats, ctx))
        y.append(np.asarray(res.correct_flags, dtype=np.float64))
    if not X:
        raise DataError("corpus has no hypothesis words to train on")
    return np.concatenate(X), np.concatenate(y)


def train_mlp(corpus: Sequence[Utterance], cfg: MlpConfig = MlpConfig(), tcfg: nn.TrainConfig = nn.TrainConfig()) -> CcModel:
    if not corpus:
        raise DataError("empty training corpus")
    stats = fit_stats(corpus_vectors(corpus))
    X, y = word_training_data(corpus, stats, cfg.context)
    idx = balance_classes(y > 0.5, tcfg.seed)
    X, y = X[idx], y[idx]
    rng = np.random.default_rng(tcfg.seed)
    params = init_mlp(cfg, rng)
    opt = nn.make_optimizer(tcfg)
    for epoch in range(tcfg.epochs):
        total = 0.0
        for batch in nn.minibatches(len(y), tcfg.batch_size, rng):
            loss, grads = mlp_loss(params, X[batch], y[batch])
            nn.check_finite("mlp gradients", *grads.values())
            opt.step(params, grads)
            total += loss * len(batch)
        log.debug("mlp epoch %d loss %.6f", epoch, total / len(y))
    return CcModel("mlp", cfg, params, stats, tcfg)


def score_words_mlp(model: CcModel, utt: Utterance) -> np.ndarray:
    if model.kind != "mlp":
        raise ValueError("score_words_mlp needs an MLP model")
    if not utt.hypothesis:
        return np.zeros(0)
    logits, _ = mlp_logits(model.params, utterance_inputs(utt, model.stats, model.config.context))
    return nn.sigmoid(logits)


def aggregate_utterance(scores, durations_ms) -> float:
    """Duration-weighted mean of word scores."""
    s = np.asarray(scores, dtype=np.float64)
    d = np.asarray(durations_ms, dtype=np.float64)
    if s.size == 0 or s.shape != d.shape:
        raise DataError("aggregate_utterance needs equal-length nonempty inputs")
    if np.any(d <= 0):
        raise DataError("durations must be positive")
    return float(np.sum(s * d) / np.sum(d))


# -- LSTM ---------------------------------------------------------------------


def init_lstm_cc(cfg: LstmConfig, rng: np.random.Generator) -> nn.Params:
    params = {}
    in_dim = cfg.context.stacked_dim(BASE_DIM)
    for layer in range(cfg.layers):
        params.update(nn.init_lstm(rng, in_dim if layer == 0 else cfg.cells, cfg.cells, f"lstm{layer}"))
    params["head.w"] = nn.glorot_uniform(rng, cfg.cells, 1, shape=(cfg.cells,))
    params["head.b"] = np.zeros(1)
    return params


def _n_lstm_layers(params):
    return sum(1 for k in params if k.endswith(".Wx"))


def lstm_forward(params: nn.Params, xs: np.ndarray):
    """``xs`` is ``(T, B, D)``; returns predictions ``(T, B)`` and caches."""
    caches = []
    h = xs
    for layer in range(_n_lstm_layers(params)):
        p = f"lstm{layer}"
        h, c = nn.lstm_layer_forward(h, params[f"{p}.Wx"], params[f"{p}.Wh"], params[f"{p}.b"])
        caches.append(c)
    pred = nn.sigmoid(h @ params["head.w"] + params["head.b"][0])
    return pred, (h, caches)


def lstm_loss(params: nn.Params, xs: np.ndarray, ys: np.ndarray, mask: np.ndarray):
    """Per-utterance summed squared error, averaged over the batch.

    ``xs`` is ``(T, B, D)``, ``ys`` and ``mask`` are ``(T, B)``; padded steps
    carry mask 0 and contribute nothing.
    """
    B = xs.shape[1]
    pred, (htop, caches) = lstm_forward(params, xs)
    loss, dpred = nn.mse_loss(pred, ys, mask)
    loss /= B
    dz = dpred / B * pred * (1.0 - pred)
    grads = {"head.w": np.einsum("tbh,tb->h", htop, dz), "head.b": np.array([dz.sum()])}
    dh = dz[:, :, None] * params["head.w"]
    for layer in range(_n_lstm_layers(params) - 1, -1, -1):
        p = f"lstm{layer}"
        dh, grads[f"{p}.Wx"], grads[f"{p}.Wh"], grads[f"{p}.b"] = nn.lstm_layer_backward(
            dh, caches[layer], params[f"{p}.Wx"], params[f"{p}.Wh"]
        )
    return loss, grads


def pad_batch(seqs: Sequence[np.ndarray], targets: Sequence[np.ndarray] | None = None):
    """Pad variable-length ``(N_i, D)`` sequences to ``(T, B, D)`` plus a mask."""
    T = max(len(s) for s in seqs)
    B = len(seqs)
    D = seqs[0].shape[1]
    xs = np.zeros((T, B, D))
    ys = np.zeros((T, B))
    mask = np.zeros((T, B))
    for b, s in enumerate(seqs):
        xs[: len(s), b] = s
        mask[: len(s), b] = 1.0
        if targets is not None:
            ys[: len(s), b] = targets[b]
    return xs, ys, mask


def sequence_training_data(corpus: Sequence[Utterance], stats: FeatureStats, ctx: ContextConfig, count_deletions=True):
    """Inputs and cumulative-accuracy targets, skipping utterances with fewer than two words."""
    seqs, targets = [], []
    for utt in corpus:
        if len(utt.hypothesis) < 2:
            continue
        res = align(utt.reference, utt.hyp_tokens)
        seqs.append(utterance_inputs(utt, stats, ctx))
        targets.append(cumulative_labels(res, count_deletions=count_deletions))
    return seqs, targets


def train_lstm(
    corpus: Sequence[Utterance],
    cfg: LstmConfig = LstmConfig(),
    tcfg: nn.TrainConfig = nn.TrainConfig(),
    count_deletions: bool = True,
) -> CcModel:
    """Fit the sequence regressor.

    One-word utterances carry no sequential context and are left out of
    training; they are still scored at inference.
    """
    multi = [u for u in corpus if len(u.hypothesis) >= 2]
    if not multi:
        raise DataError("no utterances with two or more hypothesis words to train the LSTM on")
    stats = fit_stats(corpus_vectors(multi))
    seqs, targets = sequence_training_data(multi, stats, cfg.context, count_deletions)
    rng = np.random.default_rng(tcfg.seed)
    params = init_lstm_cc(cfg, rng)
    opt = nn.make_optimizer(tcfg)
    for epoch in range(tcfg.epochs):
        total = 0.0
        for batch in nn.minibatches(len(seqs), tcfg.batch_size, rng):
            xs, ys, mask = pad_batch([seqs[i] for i in batch], [targets[i] for i in batch])
            loss, grads = lstm_loss(params, xs, ys, mask)
            nn.check_finite("lstm gradients", *grads.values())
            opt.step(params, grads)
            total += loss * len(batch)
        log.debug("lstm epoch %d loss %.6f", epoch, total / len(seqs))
    return CcModel("lstm", cfg, params, stats, tcfg)


# -- scoring ------------------------------------------------------------------


def score_utterance(model: CcModel, utt: Utterance) -> tuple[np.ndarray, float]:
    """Per-step scores and the utterance confidence.

    For the LSTM the per-step scores are the running predictions and the
    confidence is the last one. For the MLP they are word scores and the
    confidence is their duration-weighted mean. An empty hypothesis scores 0.
    """
    if not utt.hypothesis:
        return np.zeros(0), 0.0
    if model.kind == "mlp":
        words = score_words_mlp(model, utt)
        return words, aggregate_utterance(words, [w.duration_ms for w in utt.hypothesis])
    x = utterance_inputs(utt, model.stats, model.config.context)
    pred, _ = lstm_forward(model.params, x[:, None, :])
    steps = pred[:, 0]
    return steps, float(steps[-1])


def score_corpus(model: CcModel, corpus: Sequence[Utterance], with_accuracy: bool = True) -> list[ScoredUtterance]:
    out = []
    for utt in corpus:
        _, conf = score_utterance(model, utt)
        acc = utterance_accuracy(align(utt.reference, utt.hyp_tokens)) if with_accuracy else None
        out.append(
            ScoredUtterance(
                id=utt.id,
                confidence=conf,
                accuracy=acc,
                n_words=len(utt.hypothesis),
                total_duration_ms=utt.total_duration_ms,
            )
        )
    return out
