"""KL-regularised adaptation of a toy per-token acoustic model.

Fine-tuning with ``(1 - lam) * CE(labels) + lam * KL(f_base || f_adapted)``
has the same gradients as plain cross-entropy against the soft targets
``(1 - lam) * onehot(labels) + lam * f_base(x)``, because the KL term differs
from ``CE(f_base, f_adapted)`` only by the (constant) entropy of the frozen
base posteriors. :func:`adapt` trains on those soft targets.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nn_core as nn
from .cc_models import CcModel, LstmConfig, MlpConfig, score_corpus, train_lstm, train_mlp
from .corpus import Utterance, WordHyp
from .errors import DataError
from .evaluation import corpus_errors, werr
from .selection import (
    ALL,
    COMBINED,
    HIGH,
    PENULTIMATE,
    SEMI_SUPERVISED,
    SUPERVISED,
    SelectionManifest,
    SelectionPolicy,
    select,
)
from .synthesis import AmCorpus, AmDomainSpec, gen_am_corpus, make_am_spec, random_shift, shift_domain

log = logging.getLogger(__name__)


@dataclass
class ToyAm:
    """One tanh hidden layer mapping token features to a posterior over the vocabulary."""

    params: nn.Params

    @property
    def feat_dim(self) -> int:
        return self.params["am.W1"].shape[0]

    @property
    def vocab_size(self) -> int:
        return self.params["am.W2"].shape[1]

    def copy(self) -> "ToyAm":
        return ToyAm({k: v.copy() for k, v in self.params.items()})

    def save(self, path, extra=None) -> None:
        arch = {"feat_dim": self.feat_dim, "hidden": self.params["am.W1"].shape[1], "vocab_size": self.vocab_size}
        nn.write_checkpoint(path, "toy_am", arch, {}, self.params, extra)

    @classmethod
    def load(cls, path) -> "ToyAm":
        doc = nn.read_checkpoint(path)
        if doc["kind"] != "toy_am":
            raise DataError(f"{path}: expected a toy_am checkpoint, found {doc['kind']!r}")
        return cls(doc["params"])


@dataclass
class KldConfig:
    lam: float = 0.5
    train: nn.TrainConfig = field(default_factory=lambda: nn.TrainConfig(learning_rate=1e-3, epochs=10, batch_size=64))

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"KL weight must lie in [0, 1], got {self.lam}")

    def to_dict(self):
        return {"lambda": self.lam, "train": self.train.to_dict()}


def init_toy_am(feat_dim: int, vocab_size: int, hidden: int, rng: np.random.Generator) -> ToyAm:
    return ToyAm(
        {
            "am.W1": nn.glorot_uniform(rng, feat_dim, hidden),
            "am.b1": np.zeros(hidden),
            "am.W2": nn.glorot_uniform(rng, hidden, vocab_size),
            "am.b2": np.zeros(vocab_size),
        }
    )


def _check_dim(model: ToyAm, X):
    if X.ndim != 2 or X.shape[1] != model.feat_dim:
        raise ValueError(f"toy AM expects (n, {model.feat_dim}) features, got {X.shape}")


def am_logits(params: nn.Params, X: np.ndarray):
    h = np.tanh(nn.affine_forward(X, params["am.W1"], params["am.b1"]))
    return nn.affine_forward(h, params["am.W2"], params["am.b2"]), h


def posteriors(model: ToyAm, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    _check_dim(model, X)
    # same arithmetic as the gradient in soft_ce_loss, so a model scored
    # against its own posteriors sees an exactly zero gradient
    return np.exp(nn.log_softmax(am_logits(model.params, X)[0]))


def soft_ce_loss(params: nn.Params, X: np.ndarray, targets: np.ndarray, check_targets=True):
    """Mean soft-target cross-entropy over tokens and its gradients."""
    logits, h = am_logits(params, X)
    n = X.shape[0]
    loss, dz = nn.ce_loss_soft(logits, targets, check_targets)
    dz = dz / n
    dh, dW2, db2 = nn.affine_backward(dz, h, params["am.W2"])
    dpre = dh * (1.0 - h**2)
    _, dW1, db1 = nn.affine_backward(dpre, X, params["am.W1"])
    return loss / n, {"am.W1": dW1, "am.b1": db1, "am.W2": dW2, "am.b2": db2}


def one_hot(labels, vocab_size: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= vocab_size):
        raise DataError(f"labels must lie in [0, {vocab_size})")
    out = np.zeros((labels.size, vocab_size))
    out[np.arange(labels.size), labels] = 1.0
    return out


def interpolate_targets(label_dist, base_post, lam: float) -> np.ndarray:
    """``(1 - lam) * label_dist + lam * base_post`` row-wise."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"KL weight must lie in [0, 1], got {lam}")
    label_dist = np.asarray(label_dist, dtype=np.float64)
    base_post = np.asarray(base_post, dtype=np.float64)
    if label_dist.shape != base_post.shape:
        raise DataError(f"target shapes differ: {label_dist.shape} vs {base_post.shape}")
    nn.validate_distribution(label_dist)
    nn.validate_distribution(base_post)
    if lam == 0.0:
        return label_dist.copy()
    if lam == 1.0:
        return base_post.copy()
    return (1.0 - lam) * label_dist + lam * base_post


def mixture_loss(params: nn.Params, X, label_dist, base_post, lam: float) -> float:
    """``(1 - lam) * CE(labels) + lam * CE(base posteriors)``, evaluated term by term."""
    a, _ = soft_ce_loss(params, X, label_dist)
    b, _ = soft_ce_loss(params, X, base_post)
    return (1.0 - lam) * a + lam * b


def kld_objective(params: nn.Params, X, label_dist, base_post, lam: float) -> float:
    """``(1 - lam) * CE(labels) + lam * KL(base || adapted)``, mean over tokens."""
    ce, _ = soft_ce_loss(params, X, label_dist)
    logq = nn.log_softmax(am_logits(params, X)[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(base_post > 0, base_post * np.log(base_post), 0.0)
    kl = float(np.sum(plogp - base_post * logq)) / X.shape[0]
    return (1.0 - lam) * ce + lam * kl


def _train(model: ToyAm, X: np.ndarray, batch_targets, tcfg: nn.TrainConfig) -> ToyAm:
    out = model.copy()
    rng = np.random.default_rng(tcfg.seed)
    opt = nn.make_optimizer(tcfg)
    for _ in range(tcfg.epochs):
        for batch in nn.minibatches(len(X), tcfg.batch_size, rng):
            _, grads = soft_ce_loss(out.params, X[batch], batch_targets(batch), check_targets=False)
            nn.check_finite("toy AM gradients", *grads.values())
            opt.step(out.params, grads)
    return out


def fit(model: ToyAm, X: np.ndarray, targets: np.ndarray, tcfg: nn.TrainConfig) -> ToyAm:
    """Minibatch soft-target cross-entropy training on a copy of ``model``."""
    X = np.asarray(X, dtype=np.float64)
    _check_dim(model, X)
    nn.validate_distribution(targets)
    return _train(model, X, lambda b: targets[b], tcfg)


def train_base_am(X, labels, vocab_size: int, hidden: int = 32, tcfg: nn.TrainConfig | None = None) -> ToyAm:
    tcfg = tcfg or nn.TrainConfig(learning_rate=3e-3, epochs=30, batch_size=64)
    X = np.asarray(X, dtype=np.float64)
    model = init_toy_am(X.shape[1], vocab_size, hidden, np.random.default_rng([tcfg.seed, 101]))
    return fit(model, X, one_hot(labels, vocab_size), tcfg)


def adapt(base: ToyAm, X, labels, cfg: KldConfig = KldConfig()) -> ToyAm:
    """KL-regularised fine-tuning starting from ``base``.

    ``labels`` are vocabulary indices, either transcriptions or the base
    model's own hypotheses. The base model is left untouched.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if X.shape[0] == 0:
        raise DataError("empty adaptation set")
    _check_dim(base, X)
    onehot = one_hot(labels, base.vocab_size)
    if cfg.lam == 0.0:
        return _train(base, X, lambda b: onehot[b], cfg.train)
    frozen = base.copy()
    # base posteriors are recomputed per minibatch with the same arithmetic
    # the trained copy uses, so at lam = 1 every gradient is exactly zero
    return _train(base, X, lambda b: interpolate_targets(onehot[b], posteriors(frozen, X[b]), cfg.lam), cfg.train)


def decode(model: ToyAm, X) -> np.ndarray:
    """Per-token argmax; ties go to the lowest vocabulary index."""
    return np.argmax(posteriors(model, X), axis=-1)


def token_error_rate(model: ToyAm, X, labels) -> float:
    return float(np.mean(decode(model, X) != np.asarray(labels)))


# -- bridging toy AM output into scoreable utterances ------------------------


def token_name(k: int) -> str:
    return f"w{int(k)}"


def decoded_utterances(model: ToyAm, corpus: AmCorpus, tag: str | None = None) -> list[Utterance]:
    """Decode every utterance and attach confidence features.

    The toy recogniser has no language model or timing, so the feature
    slots are filled from the posterior: ``am_score`` is the log posterior
    of the chosen token, ``lm_score`` its log margin over the runner-up,
    ``duration_ms`` grows with the utterance's noise scale and
    ``phone_count`` is fixed by the token identity.
    """
    U, W, f = corpus.features.shape
    post = posteriors(model, corpus.features.reshape(-1, f)).reshape(U, W, -1)
    out = []
    for u in range(U):
        p = post[u]
        hyp = np.argmax(p, axis=-1)
        top2 = np.sort(p, axis=-1)[:, -2:]
        logp = np.log(np.maximum(top2, 1e-300))
        dur = max(1, int(round(250.0 * corpus.noise_scale[u])))
        words = tuple(
            WordHyp(
                text=token_name(hyp[w]),
                am_score=float(logp[w, 1]),
                lm_score=float(logp[w, 1] - logp[w, 0]),
                duration_ms=dur,
                phone_count=int(hyp[w]) % 5 + 1,
            )
            for w in range(W)
        )
        out.append(Utterance(corpus.ids[u], tuple(token_name(k) for k in corpus.labels[u]), words, tag))
    return out


# -- the adaptation experiment ------------------------------------------------

POLICIES: dict[str, SelectionPolicy] = {
    "supervised-all": SelectionPolicy(SUPERVISED, (ALL,)),
    "supervised-penultimate": SelectionPolicy(SUPERVISED, (PENULTIMATE,)),
    "supervised-top20": SelectionPolicy(SUPERVISED, (HIGH,)),
    "semi-all": SelectionPolicy(SEMI_SUPERVISED, (ALL,)),
    "semi-top20": SelectionPolicy(SEMI_SUPERVISED, (HIGH,)),
    "semi-penultimate": SelectionPolicy(SEMI_SUPERVISED, (PENULTIMATE,)),
    "combined": SelectionPolicy(COMBINED, (PENULTIMATE, HIGH)),
}


@dataclass
class ExperimentConfig:
    """Sizes and settings of one adaptation experiment run."""

    vocab_size: int = 12
    feat_dim: int = 8
    separation: float = 1.6
    sigma: float = 1.0
    utt_noise_spread: float = 0.5
    shift: float = 2.5
    words_per_utt: int = 8
    n_source: int = 3000
    n_cc: int = 1500
    n_pool: int = 1500
    n_test: int = 1000
    am_hidden: int = 32
    cc_kind: str = "lstm"
    kld: KldConfig = field(default_factory=KldConfig)
    base_train: nn.TrainConfig = field(default_factory=lambda: nn.TrainConfig(learning_rate=3e-3, epochs=30, batch_size=64))
    cc_train: nn.TrainConfig = field(default_factory=lambda: nn.TrainConfig(learning_rate=3e-3, epochs=15, batch_size=32))

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k not in ("kld", "base_train", "cc_train")}
        d["kld"] = self.kld.to_dict()
        d["base_train"] = self.base_train.to_dict()
        d["cc_train"] = self.cc_train.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        kld = d.pop("kld", None)
        base = d.pop("base_train", None)
        cct = d.pop("cc_train", None)
        cfg = cls(**d)
        if kld is not None:
            cfg.kld = KldConfig(kld["lambda"], nn.TrainConfig(**kld["train"]))
        if base is not None:
            cfg.base_train = nn.TrainConfig(**base)
        if cct is not None:
            cfg.cc_train = nn.TrainConfig(**cct)
        return cfg

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _with_seed(tcfg: nn.TrainConfig, seed: int) -> nn.TrainConfig:
    return nn.TrainConfig(seed=seed, learning_rate=tcfg.learning_rate, epochs=tcfg.epochs,
                          batch_size=tcfg.batch_size, optimizer=tcfg.optimizer)


@dataclass
class SeedSetup:
    """Everything an experiment seed shares across policies."""

    source: AmDomainSpec
    target: AmDomainSpec
    base: ToyAm
    cc: CcModel
    pool: AmCorpus
    pool_utts: list[Utterance]
    pool_scored: list
    test: AmCorpus
    baseline_hyp: np.ndarray


def prepare_seed(cfg: ExperimentConfig, seed: int) -> SeedSetup:
    source = make_am_spec(cfg.vocab_size, cfg.feat_dim, cfg.separation, cfg.sigma, cfg.utt_noise_spread, seed)
    target = shift_domain(source, random_shift(source, cfg.shift, seed)) if cfg.shift > 0 else source
    src = gen_am_corpus(source, cfg.n_source, cfg.words_per_utt, stream=0, prefix="src")
    base = train_base_am(*src.flat(), cfg.vocab_size, cfg.am_hidden, _with_seed(cfg.base_train, seed))

    # the confidence classifier only ever sees source-domain recognition output
    cc_utts = decoded_utterances(base, gen_am_corpus(source, cfg.n_cc, cfg.words_per_utt, stream=1, prefix="dev"))
    cc_tcfg = _with_seed(cfg.cc_train, seed)
    if cfg.cc_kind == "lstm":
        cc = train_lstm(cc_utts, LstmConfig(), cc_tcfg)
    elif cfg.cc_kind == "mlp":
        cc = train_mlp(cc_utts, MlpConfig(), cc_tcfg)
    else:
        raise ValueError(f"unknown cc_kind {cfg.cc_kind!r}")

    pool = gen_am_corpus(target, cfg.n_pool, cfg.words_per_utt, stream=2, prefix="pool")
    pool_utts = decoded_utterances(base, pool, "target")
    test = gen_am_corpus(target, cfg.n_test, cfg.words_per_utt, stream=3, prefix="test")
    return SeedSetup(source, target, base, cc, pool, pool_utts, score_corpus(cc, pool_utts), test,
                     decode(base, test.features.reshape(-1, cfg.feat_dim)))


def adaptation_samples(setup: SeedSetup, manifest: SelectionManifest) -> tuple[np.ndarray, np.ndarray]:
    """Token features and labels for the manifest's utterances."""
    index = {uid: i for i, uid in enumerate(setup.pool.ids)}
    f = setup.pool.features.shape[-1]
    X, Y = [], []
    for uid, src in zip(manifest.ids, manifest.label_sources):
        i = index[uid]
        X.append(setup.pool.features[i])
        if src == "reference":
            Y.append(setup.pool.labels[i])
        else:
            Y.append(decode(setup.base, setup.pool.features[i]))
    if not X:
        return np.zeros((0, f)), np.zeros(0, dtype=np.int64)
    return np.concatenate(X), np.concatenate(Y)


def _token_utterances(corpus: AmCorpus, hyp_flat: np.ndarray) -> list[Utterance]:
    W = corpus.labels.shape[1]
    hyp = hyp_flat.reshape(-1, W)
    return [
        Utterance(
            corpus.ids[u],
            tuple(token_name(k) for k in corpus.labels[u]),
            tuple(WordHyp(token_name(k), 0.0, 0.0, 1, 1) for k in hyp[u]),
        )
        for u in range(len(corpus))
    ]


def pooled_wer(corpus: AmCorpus, hyp_flat: np.ndarray) -> float:
    errors, words = corpus_errors(_token_utterances(corpus, hyp_flat))
    return errors / words


def run_policy(setup: SeedSetup, policy: SelectionPolicy, kld: KldConfig, seed: int) -> dict:
    manifest = select(setup.pool_scored, policy, seed=seed)
    X, Y = adaptation_samples(setup, manifest)
    by_id = {u.id: u for u in setup.pool_utts}
    duration = sum(by_id[i].total_duration_ms for i in manifest.ids)
    base_wer = pooled_wer(setup.test, setup.baseline_hyp)
    if len(X) == 0 or kld.train.epochs == 0:
        model = setup.base
    else:
        model = adapt(setup.base, X, Y, KldConfig(kld.lam, _with_seed(kld.train, seed)))
    wer = pooled_wer(setup.test, decode(model, setup.test.features.reshape(-1, setup.test.features.shape[-1])))
    return {
        "seed": seed,
        "wer": wer,
        "baseline_wer": base_wer,
        "werr": werr(base_wer, wer),
        "n_utterances": len(manifest.ids),
        "total_duration_ms": duration,
        "n_hours_equivalent": duration / 3.6e6,
    }


def run_table4_experiment(
    cfg: ExperimentConfig = ExperimentConfig(),
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    policies: Sequence[str] | None = None,
) -> dict:
    """Baseline vs adapted WER for each selection policy, per seed and median.

    For each seed: train a base model on the source domain, a confidence
    classifier on source-domain recognition output, score a shifted target
    pool, then for each policy select, adapt and decode a held-out target
    test split.
    """
    names = list(POLICIES) if policies is None else list(policies)
    unknown = [n for n in names if n not in POLICIES]
    if unknown:
        raise ValueError(f"unknown policies: {unknown}")
    rows = {n: [] for n in names}
    baseline = []
    for seed in seeds:
        setup = prepare_seed(cfg, seed)
        baseline.append({"seed": seed, "wer": pooled_wer(setup.test, setup.baseline_hyp)})
        for n in names:
            rows[n].append(run_policy(setup, POLICIES[n], cfg.kld, seed))
            log.info("seed %d %-24s werr %.2f", seed, n, rows[n][-1]["werr"])
    return {
        "metadata": {
            "lambda": cfg.kld.lam,
            "seeds": list(seeds),
            "config": cfg.to_dict(),
            "config_hash": cfg.config_hash(),
        },
        "baseline": baseline,
        "policies": [
            {
                "policy": n,
                "selection": POLICIES[n].to_dict(),
                "runs": rows[n],
                "median": {
                    "wer": float(np.median([r["wer"] for r in rows[n]])),
                    "werr": float(np.median([r["werr"] for r in rows[n]])),
                    "n_utterances": float(np.median([r["n_utterances"] for r in rows[n]])),
                },
            }
            for n in names
        ],
    }


def format_report(report: dict) -> str:
    lines = [f"{'policy':<24} {'median WER%':>11} {'median WERR%':>12} {'utts':>6}"]
    base = np.median([b["wer"] for b in report["baseline"]])
    lines.append(f"{'baseline':<24} {100 * base:>11.2f} {'-':>12} {'-':>6}")
    for p in report["policies"]:
        m = p["median"]
        lines.append(f"{p['policy']:<24} {100 * m['wer']:>11.2f} {m['werr']:>12.2f} {m['n_utterances']:>6.0f}")
    return "\n".join(lines)
