"""Utterance data model and JSON Lines I/O.

A corpus file holds one utterance per line::

    {"id": "u1", "reference": ["a", "b"],
     "hypothesis": [{"text": "a", "am_score": -1.2, "lm_score": -3.0,
                     "duration_ms": 240, "phone_count": 3}],
     "domain_tag": "search"}

A scored-pool file holds one :class:`ScoredUtterance` per line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError


@dataclass(frozen=True)
class WordHyp:
    """One hypothesis word with its confidence features."""

    text: str
    am_score: float
    lm_score: float
    duration_ms: int
    phone_count: int

    def __post_init__(self):
        if not self.text or any(ch.isspace() for ch in self.text):
            raise DataError(f"invalid token {self.text!r}")
        if int(self.duration_ms) < 1:
            raise DataError(f"duration_ms must be >= 1, got {self.duration_ms}")
        if int(self.phone_count) < 1:
            raise DataError(f"phone_count must be >= 1, got {self.phone_count}")
        if not (math.isfinite(self.am_score) and math.isfinite(self.lm_score)):
            raise DataError("am_score and lm_score must be finite")


@dataclass(frozen=True)
class Utterance:
    id: str
    reference: tuple[str, ...] = ()
    hypothesis: tuple[WordHyp, ...] = ()
    domain_tag: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "reference", tuple(self.reference))
        object.__setattr__(self, "hypothesis", tuple(self.hypothesis))
        for tok in self.reference:
            if not tok or any(ch.isspace() for ch in tok):
                raise DataError(f"utterance {self.id}: invalid reference token {tok!r}")

    @property
    def hyp_tokens(self) -> list[str]:
        return [w.text for w in self.hypothesis]

    @property
    def total_duration_ms(self) -> int:
        return sum(w.duration_ms for w in self.hypothesis)


@dataclass(frozen=True)
class ScoredUtterance:
    id: str
    confidence: float
    accuracy: float | None = None
    n_words: int = 0
    total_duration_ms: int = 0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"{self.id}: confidence {self.confidence} outside [0, 1]")
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise DataError(f"{self.id}: accuracy {self.accuracy} outside [0, 1]")


_WORD_KEYS = ("text", "am_score", "lm_score", "duration_ms", "phone_count")


def _word_to_dict(w: WordHyp) -> dict:
    return {
        "text": w.text,
        "am_score": float(w.am_score),
        "lm_score": float(w.lm_score),
        "duration_ms": int(w.duration_ms),
        "phone_count": int(w.phone_count),
    }


def utterance_to_dict(u: Utterance) -> dict:
    d = {
        "id": u.id,
        "reference": list(u.reference),
        "hypothesis": [_word_to_dict(w) for w in u.hypothesis],
    }
    if u.domain_tag is not None:
        d["domain_tag"] = u.domain_tag
    return d


def _require_int(value, key):
    if isinstance(value, bool) or not isinstance(value, int):
        raise DataError(f"{key} must be an integer, got {value!r}")
    return value


def _require_num(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DataError(f"{key} must be a number, got {value!r}")
    return float(value)


def utterance_from_dict(d: dict) -> Utterance:
    if not isinstance(d, dict):
        raise DataError("record is not a JSON object")
    for key in ("id", "reference", "hypothesis"):
        if key not in d:
            raise DataError(f"missing field {key!r}")
    if not isinstance(d["id"], str) or not d["id"]:
        raise DataError("id must be a nonempty string")
    if not isinstance(d["reference"], list) or not all(isinstance(t, str) for t in d["reference"]):
        raise DataError("reference must be a list of strings")
    if not isinstance(d["hypothesis"], list):
        raise DataError("hypothesis must be a list")
    words = []
    for j, w in enumerate(d["hypothesis"]):
        if not isinstance(w, dict):
            raise DataError(f"hypothesis[{j}] is not an object")
        missing = [k for k in _WORD_KEYS if k not in w]
        if missing:
            raise DataError(f"hypothesis[{j}] missing field {missing[0]!r}")
        if not isinstance(w["text"], str):
            raise DataError(f"hypothesis[{j}].text must be a string")
        words.append(
            WordHyp(
                text=w["text"],
                am_score=_require_num(w["am_score"], "am_score"),
                lm_score=_require_num(w["lm_score"], "lm_score"),
                duration_ms=_require_int(w["duration_ms"], "duration_ms"),
                phone_count=_require_int(w["phone_count"], "phone_count"),
            )
        )
    tag = d.get("domain_tag")
    if tag is not None and not isinstance(tag, str):
        raise DataError("domain_tag must be a string")
    return Utterance(id=d["id"], reference=tuple(d["reference"]), hypothesis=tuple(words), domain_tag=tag)


def _read_jsonl(path, parse):
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(parse(json.loads(line)))
            except (json.JSONDecodeError, DataError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


def _write_jsonl(path, records: Iterable[dict]):
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                # json uses repr() for floats, which is the shortest round-trip form
                fh.write(json.dumps(rec, ensure_ascii=False, allow_nan=False))
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _check_unique(ids: Iterable[str]):
    seen = set()
    for i in ids:
        if i in seen:
            raise DataError(f"duplicate utterance id {i!r}")
        seen.add(i)


def load_corpus(path) -> list[Utterance]:
    """Read a corpus file, preserving record and word order.

    Raises:
        DataError: on a malformed line (message carries ``path:lineno``) or a
            duplicated id.
    """
    utts = _read_jsonl(path, utterance_from_dict)
    _check_unique(u.id for u in utts)
    return utts


def save_corpus(utterances: Sequence[Utterance], path) -> None:
    _check_unique(u.id for u in utterances)
    _write_jsonl(path, (utterance_to_dict(u) for u in utterances))


def scored_to_dict(s: ScoredUtterance) -> dict:
    d = {"id": s.id, "confidence": float(s.confidence)}
    if s.accuracy is not None:
        d["accuracy"] = float(s.accuracy)
    d["n_words"] = int(s.n_words)
    d["total_duration_ms"] = int(s.total_duration_ms)
    return d


def scored_from_dict(d: dict) -> ScoredUtterance:
    if not isinstance(d, dict):
        raise DataError("record is not a JSON object")
    for key in ("id", "confidence", "n_words", "total_duration_ms"):
        if key not in d:
            raise DataError(f"missing field {key!r}")
    acc = d.get("accuracy")
    return ScoredUtterance(
        id=str(d["id"]),
        confidence=_require_num(d["confidence"], "confidence"),
        accuracy=None if acc is None else _require_num(acc, "accuracy"),
        n_words=_require_int(d["n_words"], "n_words"),
        total_duration_ms=_require_int(d["total_duration_ms"], "total_duration_ms"),
    )


def load_scored(path) -> list[ScoredUtterance]:
    pool = _read_jsonl(path, scored_from_dict)
    _check_unique(s.id for s in pool)
    return pool


def save_scored(pool: Sequence[ScoredUtterance], path) -> None:
    _check_unique(s.id for s in pool)
    _write_jsonl(path, (scored_to_dict(s) for s in pool))
