import numpy as np
import pytest

from seqconf import cc_models as cc
from seqconf import nn_core as nn
from seqconf.alignment import align, cumulative_labels
from seqconf.errors import DataError
from seqconf.features import ContextConfig
from seqconf.synthesis import CcDomainSpec, gen_cc_corpus

# features that give correctness away: tiny noise, no recording offsets
CLEAN = dict(
    mu_correct=(0.0, 0.0, 5.5, 3.0),
    mu_incorrect=(-4.0, -4.0, 5.0, 3.0),
    sigma=(0.05, 0.05, 0.05, 0.0),
    utt_offset_sigma=(0.0, 0.0, 0.0, 0.0),
)


def test_balance_already_balanced():
    labels = np.array([True] * 100 + [False] * 100)
    idx = cc.balance_classes(labels, 0)
    assert sorted(idx.tolist()) == list(range(200))


def test_balance_downsamples_majority():
    labels = np.array([True] * 900 + [False] * 100)
    idx = cc.balance_classes(labels, 0)
    assert labels[idx].sum() == 100 and (~labels[idx]).sum() == 100
    assert set(np.flatnonzero(~labels)) <= set(idx.tolist())
    assert np.array_equal(idx, cc.balance_classes(labels, 0))
    assert not np.array_equal(idx, cc.balance_classes(labels, 1))


def test_balance_needs_both_classes():
    with pytest.raises(DataError):
        cc.balance_classes(np.ones(5, dtype=bool), 0)


def test_aggregate_examples():
    assert cc.aggregate_utterance([0.8, 0.6], [3, 1]) == pytest.approx(0.75)
    assert cc.aggregate_utterance([0.2, 0.4, 0.9], [5, 5, 5]) == pytest.approx(0.5)
    assert cc.aggregate_utterance([0.3], [17]) == 0.3
    with pytest.raises(DataError):
        cc.aggregate_utterance([], [])


def test_aggregate_bounds():
    rng = np.random.default_rng(0)
    for _ in range(100):
        s = rng.uniform(size=6)
        d = rng.integers(1, 500, size=6)
        a = cc.aggregate_utterance(s, d)
        assert s.min() - 1e-15 <= a <= s.max() + 1e-15


def _mlp_closure(params, X, y):
    return lambda p: cc.mlp_loss(p, X, y)


@pytest.mark.parametrize("hidden", [(8,), (6, 5)])
def test_mlp_gradient(hidden):
    rng = np.random.default_rng(1)
    cfg = cc.MlpConfig(hidden_sizes=hidden)
    params = cc.init_mlp(cfg, rng)
    X = rng.normal(size=(10, cfg.context.stacked_dim()))
    y = (rng.uniform(size=10) > 0.5).astype(float)
    rep = nn.grad_check(lambda p: cc.mlp_loss(p, X, y), params, tolerance=1e-4)
    assert rep.passed, rep.failures[:3]


def _lstm_batch(rng, cfg, lengths):
    D = cfg.context.stacked_dim()
    seqs = [rng.normal(size=(n, D)) for n in lengths]
    targets = [rng.uniform(size=n) for n in lengths]
    return cc.pad_batch(seqs, targets)


@pytest.mark.parametrize("layers", [1, 2])
def test_lstm_gradient_three_steps(layers):
    rng = np.random.default_rng(2)
    cfg = cc.LstmConfig(layers=layers, cells=5)
    params = cc.init_lstm_cc(cfg, rng)
    xs, ys, mask = _lstm_batch(rng, cfg, [3, 2])
    rep = nn.grad_check(lambda p: cc.lstm_loss(p, xs, ys, mask), params, tolerance=1e-4)
    assert rep.passed, rep.failures[:3]


def test_lstm_batch_loss_is_mean_of_utterance_losses():
    rng = np.random.default_rng(3)
    cfg = cc.LstmConfig(cells=4)
    params = cc.init_lstm_cc(cfg, rng)
    D = cfg.context.stacked_dim()
    seqs = [rng.normal(size=(n, D)) for n in (2, 5, 3)]
    targets = [rng.uniform(size=len(s)) for s in seqs]
    batch_loss, _ = cc.lstm_loss(params, *cc.pad_batch(seqs, targets))
    singles = []
    for s, t in zip(seqs, targets):
        pred, _ = cc.lstm_forward(params, s[:, None, :])
        singles.append(float(np.sum((pred[:, 0] - t) ** 2)))
    assert batch_loss * 3 == pytest.approx(sum(singles), rel=1e-12)


def test_padding_does_not_leak():
    rng = np.random.default_rng(4)
    cfg = cc.LstmConfig(cells=4)
    params = cc.init_lstm_cc(cfg, rng)
    s = rng.normal(size=(3, cfg.context.stacked_dim()))
    alone, _ = cc.lstm_forward(params, s[:, None, :])
    xs, _, _ = cc.pad_batch([s, rng.normal(size=(7, s.shape[1]))])
    padded, _ = cc.lstm_forward(params, xs)
    np.testing.assert_allclose(padded[:3, 0], alone[:, 0], atol=1e-14)


def test_train_mlp_separable():
    corpus = gen_cc_corpus(CcDomainSpec(seed=1, p_sub=0.2, **CLEAN), 300)
    model = cc.train_mlp(corpus, cc.MlpConfig(), nn.TrainConfig(seed=0, epochs=5))
    X, y = cc.word_training_data(corpus, model.stats, model.config.context)
    logits, _ = cc.mlp_logits(model.params, X)
    assert np.mean((logits > 0) == (y > 0.5)) >= 0.95


def test_train_mlp_zero_epochs_is_init():
    corpus = gen_cc_corpus(CcDomainSpec(seed=1), 50)
    tcfg = nn.TrainConfig(seed=7, epochs=0)
    model = cc.train_mlp(corpus, cc.MlpConfig(), tcfg)
    init = cc.init_mlp(cc.MlpConfig(), np.random.default_rng(7))
    for k in init:
        assert np.array_equal(model.params[k], init[k])


def test_train_mlp_errors():
    with pytest.raises(DataError):
        cc.train_mlp([], cc.MlpConfig())
    perfect = gen_cc_corpus(CcDomainSpec(seed=0, p_sub=0, p_del=0, p_ins=0), 20)
    with pytest.raises(DataError):
        cc.train_mlp(perfect, cc.MlpConfig())


def test_checkpoints_deterministic(tmp_path):
    corpus = gen_cc_corpus(CcDomainSpec(seed=2), 120)
    tcfg = nn.TrainConfig(seed=3, epochs=2)
    for kind, train in (("mlp", cc.train_mlp), ("lstm", cc.train_lstm)):
        a, b = tmp_path / f"{kind}a.ckpt", tmp_path / f"{kind}b.ckpt"
        train(corpus, tcfg=tcfg).save(a)
        train(corpus, tcfg=tcfg).save(b)
        assert a.read_bytes() == b.read_bytes()
        loaded = cc.CcModel.load(a)
        loaded.save(tmp_path / "again.ckpt")
        assert (tmp_path / "again.ckpt").read_bytes() == a.read_bytes()


def test_lstm_rejects_one_word_corpus(utt_factory):
    corpus = [utt_factory(f"u{i}", ["a"], ["a" if i % 2 else "b"]) for i in range(10)]
    with pytest.raises(DataError):
        cc.train_lstm(corpus)


def test_lstm_learns_running_accuracy():
    spec = CcDomainSpec(seed=5, p_sub=0.25, p_del=0.0, p_ins=0.05, max_len=8, difficulty_spread=0.5, **CLEAN)
    corpus = gen_cc_corpus(spec, 400)
    model = cc.train_lstm(corpus, cc.LstmConfig(cells=16), nn.TrainConfig(seed=0, epochs=50, learning_rate=1e-2))
    errs = []
    for utt in corpus:
        if len(utt.hypothesis) < 2:
            continue
        _, conf = cc.score_utterance(model, utt)
        errs.append((conf - cumulative_labels(align(utt.reference, utt.hyp_tokens))[-1]) ** 2)
    assert np.mean(errs) <= 0.01


def test_score_utterance_conventions(utt_factory):
    corpus = gen_cc_corpus(CcDomainSpec(seed=4), 100)
    lstm = cc.train_lstm(corpus, tcfg=nn.TrainConfig(epochs=1))
    mlp = cc.train_mlp(corpus, tcfg=nn.TrainConfig(epochs=1))
    empty = utt_factory("e", ["a"], [])
    for m in (lstm, mlp):
        steps, conf = cc.score_utterance(m, empty)
        assert steps.size == 0 and conf == 0.0
    assert cc.score_words_mlp(mlp, empty).size == 0
    one = utt_factory("o", ["a"], ["a"])
    steps, conf = cc.score_utterance(lstm, one)
    assert steps.shape == (1,) and 0 <= conf <= 1
    for utt in corpus[:20]:
        steps, conf = cc.score_utterance(lstm, utt)
        assert np.all((steps >= 0) & (steps <= 1))
        assert (steps, conf)[1] == cc.score_utterance(lstm, utt)[1]
        w = cc.score_words_mlp(mlp, utt)
        assert np.all((w >= 0) & (w <= 1)) and len(w) == len(utt.hypothesis)


def test_mlp_scores_independent_of_batch():
    corpus = gen_cc_corpus(CcDomainSpec(seed=4), 60)
    mlp = cc.train_mlp(corpus, tcfg=nn.TrainConfig(epochs=1))
    first = cc.score_corpus(mlp, corpus[:5])
    mixed = cc.score_corpus(mlp, corpus[40:] + corpus[:5])[-5:]
    assert first == mixed


def test_context_config_respected():
    corpus = gen_cc_corpus(CcDomainSpec(seed=4), 60)
    m = cc.train_mlp(corpus, cc.MlpConfig(hidden_sizes=(4,), context=ContextConfig(2, 0)), nn.TrainConfig(epochs=1))
    assert m.params["mlp.W0"].shape == (12, 4)
