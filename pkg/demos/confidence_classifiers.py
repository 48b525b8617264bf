"""Word-level MLP vs sequence-level LSTM confidence on synthetic recognition output.

Run with ``python3 demos/confidence_classifiers.py``. Takes a few seconds
on one core.
"""

import numpy as np

from seqconf import cc_models as cc
from seqconf import evaluation as ev
from seqconf import nn_core as nn
from seqconf import synthesis as syn
from seqconf.alignment import align, cumulative_labels

# %% A synthetic recogniser
# Each utterance has a reference and a hypothesis with bursty errors. Word
# features (acoustic score, LM score, duration, phone count) are drawn from
# different distributions for right and wrong words.
spec = syn.CcDomainSpec(seed=0)
train = syn.gen_cc_corpus(spec, 2000)
test = syn.gen_cc_corpus(spec, 500, start=2000)
print(f"train WER {ev.corpus_wer(train):.3f}, test WER {ev.corpus_wer(test):.3f}")

utt = next(u for u in train if align(u.reference, u.hyp_tokens).n_errors)
res = align(utt.reference, utt.hyp_tokens)
print("reference :", " ".join(utt.reference))
print("hypothesis:", " ".join(utt.hyp_tokens))
print("ops       :", " ".join(op.kind.name[0] for op in res.ops))
print("targets   :", np.round(cumulative_labels(res), 3))

# %% Train both classifiers
tcfg = nn.TrainConfig(seed=0, epochs=10)
lstm = cc.train_lstm(train, cc.LstmConfig(), tcfg)
mlp = cc.train_mlp(train, cc.MlpConfig(), tcfg)

# %% Reliability: does a score of 0.7 mean 70% accurate?
for name, model in (("LSTM", lstm), ("MLP", mlp)):
    bins, r = ev.reliability_bins(cc.score_corpus(model, test))
    print(f"\n{name}")
    print(ev.format_bins_table(bins, r))

# %% The same models on a mismatched domain
mis = syn.gen_cc_corpus(syn.mismatched_cc_spec(spec), 500, start=2000)
for name, model in (("LSTM", lstm), ("MLP", mlp)):
    _, r_match = ev.reliability_bins(cc.score_corpus(model, test))
    _, r_mis = ev.reliability_bins(cc.score_corpus(model, mis))
    print(f"{name}: pearson matched {r_match:.3f}, mismatched {r_mis:.3f}")

# %% Word-level accept/reject trade-off for the MLP
scores, correct = [], []
for u in test:
    if u.hypothesis:
        scores.append(cc.score_words_mlp(mlp, u))
        correct.append(align(u.reference, u.hyp_tokens).correct_flags)
curve = ev.ca_fa_curve(np.concatenate(scores), np.concatenate(correct))
for p in curve[::20]:
    print(f"threshold {p.threshold:.2f}: CA {p.ca:.3f}  FA {p.fa:.3f}")
