"""Pick adaptation data by confidence and adapt a toy acoustic model.

A base model trained on a source domain decodes a shifted target pool. A
confidence classifier trained on source-domain output ranks that pool;
slices of the ranking become supervised (transcribed) or semi-supervised
(self-labelled) adaptation sets. Runs in a few seconds.
"""

import numpy as np

from seqconf import adaptation as ad
from seqconf import nn_core as nn
from seqconf import selection as sel

# %% One seed of the experiment, step by step
cfg = ad.ExperimentConfig(n_source=1500, n_cc=800, n_pool=800, n_test=500)
setup = ad.prepare_seed(cfg, seed=0)
base_wer = ad.pooled_wer(setup.test, setup.baseline_hyp)
print(f"base model on the shifted target: WER {base_wer:.3f}")

# %% How good are the slices?
acc = {u.id: s.accuracy for u, s in zip(setup.pool_utts, setup.pool_scored)}
for name, rng in (("top[0,20)", sel.HIGH), ("top[20,60)", sel.MID),
                  ("bottom[10,30)", sel.PENULTIMATE), ("bottom[0,10)", sel.VERY_LOW), ("all", sel.ALL)):
    ids = sel.select(setup.pool_scored, rng).ids
    print(f"{name:>14}: {len(ids):4d} utterances, mean hypothesis accuracy {np.mean([acc[i] for i in ids]):.3f}")

# %% Adapt with each policy
for name, policy in ad.POLICIES.items():
    row = ad.run_policy(setup, policy, cfg.kld, seed=0)
    print(f"{name:<24} {row['n_utterances']:4d} utts  WER {row['wer']:.3f}  WERR {row['werr']:6.2f}%")

# %% The KL weight: lam=1 keeps the base model, lam=0 ignores it
X, Y = ad.adaptation_samples(setup, sel.select(setup.pool_scored, ad.POLICIES["supervised-all"]))
Xt = setup.test.features.reshape(-1, cfg.feat_dim)
for lam in (0.0, 0.5, 0.9, 1.0):
    model = ad.adapt(setup.base, X, Y, ad.KldConfig(lam, nn.TrainConfig(seed=0, epochs=10, batch_size=64)))
    print(f"lambda {lam:.1f}: target WER {ad.pooled_wer(setup.test, ad.decode(model, Xt)):.3f}")
