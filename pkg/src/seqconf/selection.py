"""Confidence-ranked percentile selection of adaptation data.

Data is ranked by utterance confidence and sliced into percentile buckets
by utterance count rather than by a fixed score threshold:

============  ==================  ==========  ===============
bucket        slice               supervised  semi-supervised
============  ==================  ==========  ===============
High          top 0-20%           no          recommended
Mid           top 20-60%          viable      viable
Penultimate   bottom 10-30%       recommended no
VeryLow       bottom 0-10%        no          no
============  ==================  ==========  ===============

Low-but-not-lowest confidence data is where a supervised transcription
teaches the model most; high-confidence hypotheses are good enough to
stand in for transcriptions. The very bottom is mostly noise and
off-target audio and is never recommended.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import ScoredUtterance, Utterance, _word_to_dict, scored_to_dict
from .errors import DataError

SUPERVISED = "supervised"
SEMI_SUPERVISED = "semi_supervised"
COMBINED = "combined"
MODES = (SUPERVISED, SEMI_SUPERVISED, COMBINED)

LABEL_SOURCE = {SUPERVISED: "reference", SEMI_SUPERVISED: "hypothesis"}


@dataclass(frozen=True)
class PercentileRange:
    anchor: str  # "top" | "bottom"
    lo_pct: float
    hi_pct: float

    def __post_init__(self):
        if self.anchor not in ("top", "bottom"):
            raise ValueError(f"anchor must be 'top' or 'bottom', got {self.anchor!r}")
        if not (0 <= self.lo_pct < self.hi_pct <= 100):
            raise ValueError(f"percentile range [{self.lo_pct}, {self.hi_pct}) outside 0 <= lo < hi <= 100")

    def __str__(self):
        return f"{self.anchor}[{self.lo_pct:g},{self.hi_pct:g})"

    def to_dict(self):
        return {"anchor": self.anchor, "lo_pct": self.lo_pct, "hi_pct": self.hi_pct}

    @classmethod
    def parse(cls, text: str) -> "PercentileRange":
        """Parse ``top[0,20)`` / ``bottom[10,30)`` or a preset name."""
        key = text.strip()
        if key.lower() in PRESETS:
            return PRESETS[key.lower()]
        try:
            anchor, rest = key.split("[", 1)
            lo, hi = rest.rstrip(")]").split(",")
            return cls(anchor.strip(), float(lo), float(hi))
        except ValueError as exc:
            raise ValueError(f"cannot parse percentile range {text!r}") from exc


HIGH = PercentileRange("top", 0, 20)
MID = PercentileRange("top", 20, 60)
PENULTIMATE = PercentileRange("bottom", 10, 30)
VERY_LOW = PercentileRange("bottom", 0, 10)
ALL = PercentileRange("top", 0, 100)
PRESETS = {"high": HIGH, "mid": MID, "penultimate": PENULTIMATE, "very_low": VERY_LOW, "all": ALL}


@dataclass(frozen=True)
class SelectionPolicy:
    mode: str
    ranges: tuple[PercentileRange, ...]

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown selection mode {self.mode!r}")
        if self.mode == COMBINED and len(self.ranges) != 2:
            raise ValueError("combined policy takes a supervised and a semi-supervised range")

    def to_dict(self):
        return {"mode": self.mode, "ranges": [r.to_dict() for r in self.ranges]}


@dataclass(frozen=True)
class SelectionManifest:
    ids: tuple[str, ...]
    label_sources: tuple[str, ...]
    policy: SelectionPolicy
    pool_hash: str
    seed: int = 0

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise DataError("manifest ids must be unique")
        if len(self.ids) != len(self.label_sources):
            raise DataError("one label source per id")

    @property
    def label_source(self) -> str:
        kinds = set(self.label_sources)
        return kinds.pop() if len(kinds) == 1 else "mixed"

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.to_dict(),
            "pool_hash": self.pool_hash,
            "seed": self.seed,
            "ids": list(self.ids),
            "label_source": self.label_source,
            "label_sources": list(self.label_sources),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SelectionManifest":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        policy = SelectionPolicy(d["policy"]["mode"], tuple(PercentileRange(**r) for r in d["policy"]["ranges"]))
        sources = d.get("label_sources") or [d["label_source"]] * len(d["ids"])
        return cls(tuple(d["ids"]), tuple(sources), policy, d["pool_hash"], d.get("seed", 0))


def pool_hash(pool: Sequence[ScoredUtterance]) -> str:
    h = hashlib.sha256()
    for s in sorted(pool, key=lambda s: s.id):
        h.update(json.dumps(scored_to_dict(s), sort_keys=True).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def rank_pool(pool: Sequence[ScoredUtterance]) -> list[str]:
    """Ids by descending confidence, ties broken by ascending id."""
    if not pool:
        raise DataError("cannot rank an empty pool")
    return [s.id for s in sorted(pool, key=lambda s: (-s.confidence, s.id))]


def slice_ranked(ranked: Sequence[str], rng: PercentileRange) -> list[str]:
    M = len(ranked)
    order = list(ranked) if rng.anchor == "top" else list(reversed(ranked))
    lo = math.floor(rng.lo_pct * M / 100)
    hi = math.floor(rng.hi_pct * M / 100)
    return order[lo:hi]


def recommend(mode: str) -> PercentileRange | tuple[PercentileRange, PercentileRange]:
    """Recommended bucket per adaptation mode (combined returns both)."""
    if mode == SUPERVISED:
        return PENULTIMATE
    if mode == SEMI_SUPERVISED:
        return HIGH
    if mode == COMBINED:
        return (PENULTIMATE, HIGH)
    raise ValueError(f"unknown selection mode {mode!r}")


def default_policy(mode: str) -> SelectionPolicy:
    r = recommend(mode)
    return SelectionPolicy(mode, r if isinstance(r, tuple) else (r,))


def select(
    pool: Sequence[ScoredUtterance],
    rng: PercentileRange | SelectionPolicy,
    mode: str = SUPERVISED,
    seed: int = 0,
) -> SelectionManifest:
    """Slice a confidence-ranked pool.

    ``rng`` is either a single range (labelled per ``mode``) or a full
    policy. A combined policy takes its first range with reference labels
    and its second with hypothesis labels; the two are disjoint, and an id
    in both keeps its supervised label.
    """
    policy = rng if isinstance(rng, SelectionPolicy) else SelectionPolicy(mode, (rng,))
    ranked = rank_pool(pool)
    if policy.mode == COMBINED:
        parts = [
            (slice_ranked(ranked, policy.ranges[0]), "reference"),
            (slice_ranked(ranked, policy.ranges[1]), "hypothesis"),
        ]
    else:
        parts = [(slice_ranked(ranked, r), LABEL_SOURCE[policy.mode]) for r in policy.ranges]
    ids, sources, seen = [], [], set()
    for chunk, src in parts:
        for i in chunk:
            if i not in seen:
                seen.add(i)
                ids.append(i)
                sources.append(src)
    return SelectionManifest(tuple(ids), tuple(sources), policy, pool_hash(pool), seed)


def adaptation_rows(manifest: SelectionManifest, corpus: Sequence[Utterance]) -> list[dict]:
    """Adaptation records in manifest order.

    Reference-labelled rows keep the transcription as ``labels``;
    hypothesis-labelled rows use the recognised words and drop the
    reference entirely.
    """
    by_id = {u.id: u for u in corpus}
    rows = []
    for i, src in zip(manifest.ids, manifest.label_sources):
        if i not in by_id:
            raise DataError(f"manifest id {i!r} not in corpus")
        u = by_id[i]
        row = {"id": u.id, "label_source": src}
        if src == "reference":
            row["reference"] = list(u.reference)
            row["labels"] = list(u.reference)
        else:
            row["labels"] = u.hyp_tokens
        row["hypothesis"] = [_word_to_dict(w) for w in u.hypothesis]
        if u.domain_tag is not None:
            row["domain_tag"] = u.domain_tag
        rows.append(row)
    return rows


def emit_adaptation_set(manifest: SelectionManifest, corpus: Sequence[Utterance], path) -> list[dict]:
    rows = adaptation_rows(manifest, corpus)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return rows


def load_adaptation_set(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
