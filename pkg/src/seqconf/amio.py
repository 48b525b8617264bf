"""JSON Lines I/O for toy acoustic-model token corpora.

One utterance per line::

    {"id": "pool-2-000000", "labels": [3, 0, ...], "features": [[...], ...], "noise_scale": 1.07}
"""

from __future__ import annotations

import json

import numpy as np

from .errors import DataError
from .synthesis import AmCorpus


def save_am_corpus(corpus: AmCorpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u in range(len(corpus)):
            rec = {
                "id": corpus.ids[u],
                "labels": [int(k) for k in corpus.labels[u]],
                "features": [[float(x) for x in row] for row in corpus.features[u]],
                "noise_scale": float(corpus.noise_scale[u]),
            }
            fh.write(json.dumps(rec) + "\n")


def load_am_corpus(path) -> AmCorpus:
    ids, X, Y, S = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                ids.append(rec["id"])
                X.append(np.asarray(rec["features"], dtype=np.float64))
                Y.append(np.asarray(rec["labels"], dtype=np.int64))
                S.append(float(rec.get("noise_scale", 1.0)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if X[-1].ndim != 2 or X[-1].shape[0] != Y[-1].shape[0]:
                raise DataError(f"{path}:{lineno}: features and labels disagree in length")
    if not ids:
        raise DataError(f"{path}: empty token corpus")
    shapes = {x.shape for x in X}
    if len(shapes) != 1:
        raise DataError(f"{path}: utterances must share words-per-utterance and feature dimension")
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate utterance ids")
    return AmCorpus(np.stack(X), np.stack(Y), np.asarray(S), ids)
