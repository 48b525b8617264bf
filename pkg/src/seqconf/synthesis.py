"""Seeded synthetic corpora.

Two generators:

* :func:`gen_cc_corpus` builds recognition output for confidence-classifier
  work: a reference, a hypothesis derived from it by substitutions,
  deletions and insertions, and per-word features whose distribution
  depends on whether the word is right. Errors come in bursts (an error
  state persists to the next position with probability ``burst_rho``) and
  utterances differ in difficulty, which gives sequence models something
  to exploit.
* :func:`gen_am_corpus` builds token-classification data for the toy
  acoustic model: Gaussian clusters per vocabulary entry, optionally
  translated to simulate a new acoustic domain.

Every utterance draws from its own generator seeded with ``(seed, stream,
index)``, so output does not depend on generation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import Utterance, WordHyp

_OK, _SUB, _DEL = 0, 1, 2


@dataclass(frozen=True)
class CcDomainSpec:
    """Generator settings for a confidence-classifier corpus.

    Feature means and spreads are ordered (am_score, lm_score,
    log duration_ms, phone Poisson rate). The phone count is drawn as
    ``Poisson(rate) + 1`` so its sigma entry is unused. ``utt_offset_sigma``
    adds a per-utterance offset shared by all its words.
    """

    vocab_size: int = 1000
    p_sub: float = 0.10
    p_del: float = 0.03
    p_ins: float = 0.03
    min_len: int = 2
    max_len: int = 12
    mu_correct: tuple[float, ...] = (-1.0, -2.0, math.log(250.0), 3.0)
    mu_incorrect: tuple[float, ...] = (-2.5, -3.5, math.log(250.0) - 0.4, 2.0)
    sigma: tuple[float, ...] = (1.0, 1.2, 0.4, 0.0)
    burst_rho: float = 0.3
    difficulty_spread: float = 0.8
    utt_offset_sigma: tuple[float, ...] = (0.8, 0.6, 0.0, 0.0)
    seed: int = 0
    domain_tag: str | None = None

    def __post_init__(self):
        for name in ("p_sub", "p_del", "p_ins"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if self.p_sub + self.p_del + self.p_ins >= 1.0:
            raise ValueError("p_sub + p_del + p_ins must be < 1")
        if self.min_len < 2 or self.max_len < self.min_len:
            raise ValueError("need 2 <= min_len <= max_len")
        if not 0.0 <= self.burst_rho <= 1.0:
            raise ValueError("burst_rho must be in [0, 1]")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        for name in ("mu_correct", "mu_incorrect", "sigma", "utt_offset_sigma"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
            if len(getattr(self, name)) != 4:
                raise ValueError(f"{name} needs 4 entries")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CcDomainSpec":
        return cls(**d)


def mismatched_cc_spec(spec: CcDomainSpec, seed: int | None = None) -> CcDomainSpec:
    """A second recognition domain: shorter, harder utterances scored by a
    recogniser whose acoustic and language scores sit on a different scale.
    """
    shift = np.array([-0.8, 0.6, -0.15, 0.0])
    return replace(
        spec,
        p_sub=min(spec.p_sub * 1.5, 0.5),
        p_del=min(spec.p_del * 1.5, 0.2),
        p_ins=min(spec.p_ins * 1.5, 0.2),
        max_len=max(spec.min_len, spec.max_len // 2),
        mu_correct=tuple(np.add(spec.mu_correct, shift)),
        mu_incorrect=tuple(np.add(spec.mu_incorrect, shift)),
        seed=spec.seed if seed is None else seed,
        domain_tag="mismatched",
    )


@dataclass
class GenerationCounts:
    n_ref: int = 0
    n_sub: int = 0
    n_del: int = 0
    n_ins: int = 0
    n_match: int = 0


def _draw_word(rng, spec: CcDomainSpec, text: str, correct: bool, offset) -> WordHyp:
    mu = spec.mu_correct if correct else spec.mu_incorrect
    sd = spec.sigma
    am = rng.normal(mu[0] + offset[0], sd[0])
    lm = rng.normal(mu[1] + offset[1], sd[1])
    dur = max(1, int(round(math.exp(rng.normal(mu[2] + offset[2], sd[2])))))
    phones = int(rng.poisson(max(mu[3], 0.0))) + 1
    return WordHyp(text=text, am_score=float(am), lm_score=float(lm), duration_ms=dur, phone_count=phones)


def _gen_cc_utterance(spec: CcDomainSpec, index: int, counts: GenerationCounts) -> Utterance:
    rng = np.random.default_rng([spec.seed, 0, index])
    L = int(rng.integers(spec.min_len, spec.max_len + 1))
    ref_ids = rng.integers(0, spec.vocab_size, size=L)
    reference = [f"w{k}" for k in ref_ids]

    scale = 1.0
    if spec.difficulty_spread > 0:
        scale = math.exp(rng.normal(-0.5 * spec.difficulty_spread**2, spec.difficulty_spread))
    p_sub, p_del, p_ins = spec.p_sub * scale, spec.p_del * scale, spec.p_ins * scale
    total = p_sub + p_del
    if total > 0.9:
        p_sub, p_del = p_sub * 0.9 / total, p_del * 0.9 / total
    p_ins = min(p_ins, 0.5)
    fresh = np.array([1.0 - p_sub - p_del, p_sub, p_del])
    # recording-level offset shared by every word (channel, speaker)
    offset = rng.normal(0.0, 1.0, size=4) * np.asarray(spec.utt_offset_sigma)

    hyp: list[WordHyp] = []
    state = _OK
    for pos, k in enumerate(ref_ids):
        if pos > 0 and rng.random() < spec.burst_rho:
            pass  # keep previous state
        else:
            state = int(rng.choice(3, p=fresh))
        counts.n_ref += 1
        if state == _OK:
            counts.n_match += 1
            hyp.append(_draw_word(rng, spec, reference[pos], True, offset))
        elif state == _SUB:
            counts.n_sub += 1
            other = (int(k) + 1 + int(rng.integers(0, spec.vocab_size - 1))) % spec.vocab_size
            hyp.append(_draw_word(rng, spec, f"w{other}", False, offset))
        else:
            counts.n_del += 1
        if rng.random() < p_ins:
            counts.n_ins += 1
            hyp.append(_draw_word(rng, spec, f"w{int(rng.integers(0, spec.vocab_size))}", False, offset))
    return Utterance(id=f"{spec.domain_tag or 'cc'}-{spec.seed}-{index:06d}", reference=tuple(reference),
                     hypothesis=tuple(hyp), domain_tag=spec.domain_tag)


def gen_cc_corpus_with_counts(spec: CcDomainSpec, n: int, start: int = 0) -> tuple[list[Utterance], GenerationCounts]:
    counts = GenerationCounts()
    utts = [_gen_cc_utterance(spec, i, counts) for i in range(start, start + n)]
    return utts, counts


def gen_cc_corpus(spec: CcDomainSpec, n: int, start: int = 0) -> list[Utterance]:
    """``n`` utterances with indices ``start .. start + n - 1``."""
    return gen_cc_corpus_with_counts(spec, n, start)[0]


# -- toy acoustic-model data --------------------------------------------------


@dataclass(frozen=True)
class AmDomainSpec:
    """Class-conditional Gaussian token features.

    The effective class means are ``base_means`` plus the exactly-rounded
    sum of every shift in ``shifts``; keeping the shifts separate means a
    shift followed by its negation restores the means bit for bit.
    """

    base_means: tuple[tuple[float, ...], ...]
    sigma: float = 1.0
    shifts: tuple[tuple[float, ...], ...] = ()
    utt_noise_spread: float = 0.5
    seed: int = 0
    lineage: tuple[str, ...] = ("source",)

    def __post_init__(self):
        means = tuple(tuple(float(x) for x in row) for row in self.base_means)
        object.__setattr__(self, "base_means", means)
        object.__setattr__(self, "shifts", tuple(tuple(float(x) for x in s) for s in self.shifts))
        if len(means) < 2 or len(means[0]) < 1:
            raise ValueError("need vocab_size >= 2 and feature dim >= 1")
        if any(len(r) != len(means[0]) for r in means):
            raise ValueError("ragged class means")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @property
    def vocab_size(self) -> int:
        return len(self.base_means)

    @property
    def feat_dim(self) -> int:
        return len(self.base_means[0])

    @property
    def offset(self) -> np.ndarray:
        return np.array([math.fsum(s[d] for s in self.shifts) for d in range(self.feat_dim)])

    @property
    def means(self) -> np.ndarray:
        return np.asarray(self.base_means) + self.offset

    def to_dict(self) -> dict:
        d = asdict(self)
        d["base_means"] = [list(r) for r in self.base_means]
        d["shifts"] = [list(s) for s in self.shifts]
        d["lineage"] = list(self.lineage)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AmDomainSpec":
        d = dict(d)
        d["base_means"] = tuple(tuple(r) for r in d["base_means"])
        d["shifts"] = tuple(tuple(s) for s in d.get("shifts", ()))
        d["lineage"] = tuple(d.get("lineage", ("source",)))
        return cls(**d)


def make_am_spec(vocab_size: int = 12, feat_dim: int = 8, separation: float = 1.6, sigma: float = 1.0,
                 utt_noise_spread: float = 0.5, seed: int = 0) -> AmDomainSpec:
    """Draw class means from ``N(0, separation^2 I)``."""
    rng = np.random.default_rng([seed, 7])
    means = rng.normal(0.0, separation, size=(vocab_size, feat_dim))
    return AmDomainSpec(tuple(map(tuple, means)), sigma=sigma, utt_noise_spread=utt_noise_spread, seed=seed)


def shift_domain(spec: AmDomainSpec, delta) -> AmDomainSpec:
    """Translate every class mean by ``delta``."""
    delta = tuple(float(x) for x in np.ravel(delta))
    if len(delta) != spec.feat_dim:
        raise ValueError(f"shift has dimension {len(delta)}, features have {spec.feat_dim}")
    return replace(spec, shifts=spec.shifts + (delta,), lineage=spec.lineage + (f"shift{len(spec.shifts) + 1}",))


def random_shift(spec: AmDomainSpec, magnitude: float, seed: int) -> np.ndarray:
    """A random direction of the given Euclidean length."""
    rng = np.random.default_rng([seed, 11])
    v = rng.normal(size=spec.feat_dim)
    return magnitude * v / np.linalg.norm(v)


@dataclass
class AmCorpus:
    """Token features ``(U, W, f)``, labels ``(U, W)`` and per-utterance noise scales."""

    features: np.ndarray
    labels: np.ndarray
    noise_scale: np.ndarray
    ids: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "AmCorpus":
        idx = np.asarray(idx, dtype=int)
        return AmCorpus(self.features[idx], self.labels[idx], self.noise_scale[idx], [self.ids[i] for i in idx])

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        return self.features.reshape(-1, self.features.shape[-1]), self.labels.reshape(-1)


def gen_am_corpus(spec: AmDomainSpec, n_utterances: int, words_per_utt: int = 8, stream: int = 0,
                  prefix: str = "am") -> AmCorpus:
    """Token data drawn from ``spec``; ``stream`` separates splits drawn from the same spec."""
    means = spec.means
    V, f = means.shape
    X = np.zeros((n_utterances, words_per_utt, f))
    Y = np.zeros((n_utterances, words_per_utt), dtype=np.int64)
    S = np.ones(n_utterances)
    for u in range(n_utterances):
        rng = np.random.default_rng([spec.seed, 1, stream, u])
        scale = math.exp(rng.normal(0.0, spec.utt_noise_spread)) if spec.utt_noise_spread > 0 else 1.0
        y = rng.integers(0, V, size=words_per_utt)
        X[u] = means[y] + spec.sigma * scale * rng.normal(size=(words_per_utt, f))
        Y[u] = y
        S[u] = scale
    ids = [f"{prefix}-{stream}-{u:06d}" for u in range(n_utterances)]
    return AmCorpus(X, Y, S, ids)


def bayes_error(spec: AmDomainSpec, n_tokens: int = 200_000, seed: int = 0) -> float:
    """Monte-Carlo error of the nearest-mean rule, which is Bayes-optimal here
    (equal priors, isotropic noise shared across classes within a token)."""
    means = spec.means
    V, f = means.shape
    rng = np.random.default_rng([seed, 13])
    y = rng.integers(0, V, size=n_tokens)
    scale = np.exp(rng.normal(0.0, spec.utt_noise_spread, size=n_tokens)) if spec.utt_noise_spread > 0 else 1.0
    x = means[y] + spec.sigma * np.reshape(scale, (-1, 1)) * rng.normal(size=(n_tokens, f))
    d2 = ((x[:, None, :] - means[None]) ** 2).sum(-1)
    return float(np.mean(d2.argmin(1) != y))


def save_spec(spec, path) -> None:
    kind = "cc" if isinstance(spec, CcDomainSpec) else "am"
    Path(path).write_text(json.dumps({"kind": kind, "spec": spec.to_dict()}, indent=1) + "\n", encoding="utf-8")


def load_spec(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("kind") == "cc":
        return CcDomainSpec.from_dict(doc["spec"])
    if doc.get("kind") == "am":
        return AmDomainSpec.from_dict(doc["spec"])
    raise ValueError(f"{path}: unknown spec kind {doc.get('kind')!r}")
