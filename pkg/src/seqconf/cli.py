"""Command-line pipeline: generate, train, score, evaluate, select, adapt.

Every invocation records its fully resolved arguments and the SHA-256 of
each input file in ``run.json`` (next to the primary output unless
``--outdir``/``--run-json`` say otherwise). ``seqconf --from-run run.json``
replays the recorded invocation.

Exit codes: 0 success, 2 usage error, 3 data/schema error, 4 numeric failure.
Failures print one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import adaptation as ad
from . import amio
from . import cc_models as cc
from . import evaluation as ev
from . import nn_core as nn
from . import selection as sel
from . import synthesis as syn
from .alignment import align
from .corpus import load_corpus, load_scored, save_corpus, save_scored
from .errors import DataError, NumericError
from .features import ContextConfig

log = logging.getLogger("seqconf")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _need(args, *flags):
    """Check that input files named by ``flags`` exist; returns {path: sha256}."""
    hashes = {}
    for flag in flags:
        value = getattr(args, flag)
        if value is None:
            continue
        if not Path(value).is_file():
            raise UsageError(f"--{flag.replace('_', '-')}: no such file {value}")
        hashes[str(value)] = _sha256(value)
    return hashes


def _train_config(args) -> nn.TrainConfig:
    return nn.TrainConfig(
        seed=args.seed, learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size, optimizer=args.optimizer
    )


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, allow_nan=False) + "\n", encoding="utf-8")


# -- subcommands --------------------------------------------------------------


def cmd_gen_cc(args):
    spec = syn.load_spec(args.spec) if args.spec else syn.CcDomainSpec(
        vocab_size=args.vocab_size, p_sub=args.p_sub, p_del=args.p_del, p_ins=args.p_ins,
        min_len=args.min_len, max_len=args.max_len, burst_rho=args.burst_rho, seed=args.seed,
    )
    if not isinstance(spec, syn.CcDomainSpec):
        raise DataError(f"{args.spec}: not a confidence-corpus spec")
    if args.mismatched:
        spec = syn.mismatched_cc_spec(spec)
    utts = syn.gen_cc_corpus(spec, args.n, start=args.start)
    save_corpus(utts, args.out)
    syn.save_spec(spec, Path(args.out).with_suffix(".spec.json"))
    return {"n": len(utts), "spec": spec.to_dict()}


def cmd_gen_am(args):
    spec = syn.make_am_spec(args.vocab_size, args.feat_dim, args.separation, args.sigma, args.utt_noise_spread, args.seed)
    if args.shift > 0:
        spec = syn.shift_domain(spec, syn.random_shift(spec, args.shift, args.seed))
    corpus = syn.gen_am_corpus(spec, args.n, args.words_per_utt, stream=args.stream, prefix=args.prefix)
    amio.save_am_corpus(corpus, args.out)
    syn.save_spec(spec, Path(args.out).with_suffix(".spec.json"))
    return {"n": len(corpus), "bayes_error": syn.bayes_error(spec, 50_000, args.seed)}


def cmd_train_mlp(args):
    cfg = cc.MlpConfig(hidden_sizes=tuple(args.hidden), context=ContextConfig(args.past, args.future))
    model = cc.train_mlp(load_corpus(args.input), cfg, _train_config(args))
    model.save(args.out)
    return {"kind": "mlp"}


def cmd_train_lstm(args):
    cfg = cc.LstmConfig(layers=args.layers, cells=args.cells, context=ContextConfig(args.past, args.future))
    model = cc.train_lstm(load_corpus(args.input), cfg, _train_config(args), count_deletions=args.labels == "clamp")
    model.save(args.out)
    return {"kind": "lstm"}


def cmd_train_am(args):
    corpus = amio.load_am_corpus(args.input)
    X, y = corpus.flat()
    vocab = args.vocab_size or int(y.max()) + 1
    model = ad.train_base_am(X, y, vocab, args.hidden, _train_config(args))
    model.save(args.out)
    return {"token_error_rate": ad.token_error_rate(model, X, y)}


def cmd_decode(args):
    model = ad.ToyAm.load(args.model)
    corpus = amio.load_am_corpus(args.input)
    utts = ad.decoded_utterances(model, corpus, args.domain_tag)
    save_corpus(utts, args.out)
    return {"n": len(utts)}


def cmd_score(args):
    model = cc.CcModel.load(args.model)
    pool = cc.score_corpus(model, load_corpus(args.input), with_accuracy=not args.no_accuracy)
    save_scored(pool, args.out)
    return {"n": len(pool)}


def cmd_eval(args):
    pool = load_scored(args.input)
    bins, r = ev.reliability_bins(pool)
    report = {"n_utterances": len(pool), "pearson": r, "bins": [dataclasses.asdict(b) for b in bins]}
    curve = None
    if args.model and args.corpus:
        model = cc.CcModel.load(args.model)
        if model.kind != "mlp":
            raise UsageError("--model: CA/FA curves need word-level scores from an MLP model")
        scores, correct = [], []
        for utt in load_corpus(args.corpus):
            if utt.hypothesis:
                scores.append(cc.score_words_mlp(model, utt))
                correct.append(align(utt.reference, utt.hyp_tokens).correct_flags)
        curve = ev.ca_fa_curve(np.concatenate(scores), np.concatenate(correct))
        report["ca_fa"] = [dataclasses.asdict(p) for p in curve]
    _write_json(args.out, report)
    if args.csv_prefix:
        ev.write_bins_csv(bins, f"{args.csv_prefix}bins.csv")
        if curve:
            ev.write_curve_csv(curve, f"{args.csv_prefix}cafa.csv")
    print(ev.format_bins_table(bins, r))
    return {"pearson": r}


def cmd_select(args):
    pool = load_scored(args.input)
    if args.range:
        ranges = tuple(sel.PercentileRange.parse(r) for r in args.range)
        policy = sel.SelectionPolicy(args.mode, ranges)
    else:
        policy = sel.default_policy(args.mode)
    manifest = sel.select(pool, policy, seed=args.seed)
    manifest.save(args.out)
    if args.adaptation_out:
        if not args.corpus:
            raise UsageError("--adaptation-out needs --corpus")
        sel.emit_adaptation_set(manifest, load_corpus(args.corpus), args.adaptation_out)
    return {"n_selected": len(manifest.ids), "policy": policy.to_dict()}


def cmd_adapt(args):
    base = ad.ToyAm.load(args.base)
    pool = amio.load_am_corpus(args.pool)
    manifest = sel.SelectionManifest.load(args.manifest)
    index = {uid: i for i, uid in enumerate(pool.ids)}
    X, Y = [], []
    for uid, src in zip(manifest.ids, manifest.label_sources):
        if uid not in index:
            raise DataError(f"manifest id {uid!r} not in {args.pool}")
        feats = pool.features[index[uid]]
        X.append(feats)
        Y.append(pool.labels[index[uid]] if src == "reference" else ad.decode(base, feats))
    if not X:
        raise DataError("empty adaptation set")
    cfg = ad.KldConfig(args.kl_weight, _train_config(args))
    model = ad.adapt(base, np.concatenate(X), np.concatenate(Y), cfg)
    model.save(args.out, extra={"adaptation": cfg.to_dict()})
    return {"n_tokens": int(sum(len(x) for x in X))}


def cmd_experiment(args):
    cfg = ad.ExperimentConfig.from_dict(json.loads(Path(args.config).read_text())) if args.config else ad.ExperimentConfig()
    if args.shift is not None:
        cfg.shift = args.shift
    if args.kl_weight is not None:
        cfg.kld = ad.KldConfig(args.kl_weight, cfg.kld.train)
    if args.adapt_epochs is not None:
        cfg.kld.train.epochs = args.adapt_epochs
    policies = None if args.policies == ["all"] else args.policies
    seeds = list(range(args.seed, args.seed + args.seeds))
    report = ad.run_table4_experiment(cfg, seeds, policies)
    _write_json(args.out, report)
    print(ad.format_report(report))
    return {"config_hash": report["metadata"]["config_hash"]}


def cmd_report(args):
    report = json.loads(Path(args.input).read_text(encoding="utf-8"))
    if "policies" in report:
        text = ad.format_report(report)
    elif "bins" in report:
        bins = [ev.ReliabilityBin(**b) for b in report["bins"]]
        text = ev.format_bins_table(bins, report.get("pearson"))
    else:
        raise DataError(f"{args.input}: not an experiment or eval report")
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return {}


# -- parser -------------------------------------------------------------------


def _add_train_flags(p, lr=1e-3, epochs=20, batch_size=32):
    p.add_argument("--lr", type=float, default=lr)
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch-size", type=int, default=batch_size)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--outdir", help="directory for run.json (default: directory of --out)")
    common.add_argument("--run-json", help="explicit run.json path")
    common.add_argument("--log-level", default="WARNING")

    parser = _Parser(prog="seqconf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--from-run", help="replay the invocation recorded in a run.json")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-cc", parents=[common], help="generate a synthetic confidence corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--start", type=int, default=0, help="index of the first utterance")
    p.add_argument("--spec", help="JSON spec file (overrides the individual flags)")
    p.add_argument("--vocab-size", type=int, default=1000)
    p.add_argument("--p-sub", type=float, default=0.10)
    p.add_argument("--p-del", type=float, default=0.03)
    p.add_argument("--p-ins", type=float, default=0.03)
    p.add_argument("--min-len", type=int, default=2)
    p.add_argument("--max-len", type=int, default=12)
    p.add_argument("--burst-rho", type=float, default=0.3)
    p.add_argument("--mismatched", action="store_true", help="apply the mismatched-domain transform")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_cc, inputs=("spec",))

    p = sub.add_parser("gen-am", parents=[common], help="generate toy acoustic token data")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--words-per-utt", type=int, default=8)
    p.add_argument("--vocab-size", type=int, default=12)
    p.add_argument("--feat-dim", type=int, default=8)
    p.add_argument("--separation", type=float, default=1.6)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--utt-noise-spread", type=float, default=0.5)
    p.add_argument("--shift", type=float, default=0.0, help="length of the domain shift vector")
    p.add_argument("--stream", type=int, default=0, help="split id; different streams never share samples")
    p.add_argument("--prefix", default="am")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_am, inputs=())

    p = sub.add_parser("train-mlp", parents=[common], help="train the word-level MLP classifier")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--hidden", type=int, nargs="+", default=[32])
    p.add_argument("--past", type=int, default=1)
    p.add_argument("--future", type=int, default=1)
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_mlp, inputs=("input",))

    p = sub.add_parser("train-lstm", parents=[common], help="train the sequence-level LSTM classifier")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--cells", type=int, default=32)
    p.add_argument("--past", type=int, default=0)
    p.add_argument("--future", type=int, default=1)
    p.add_argument("--labels", choices=("clamp", "plain"), default="clamp",
                   help="count deletions in the running-accuracy targets (clamp) or not (plain)")
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_lstm, inputs=("input",))

    p = sub.add_parser("train-am", parents=[common], help="train a base toy acoustic model")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--vocab-size", type=int)
    _add_train_flags(p, lr=3e-3, epochs=30, batch_size=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_am, inputs=("input",))

    p = sub.add_parser("decode", parents=[common], help="decode token data into a scoreable corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--domain-tag")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode, inputs=("model", "input"))

    p = sub.add_parser("score", parents=[common], help="score a corpus with a confidence model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--no-accuracy", action="store_true", help="omit reference-based accuracy")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score, inputs=("model", "input"))

    p = sub.add_parser("eval", parents=[common], help="reliability bins (and CA/FA for MLP models)")
    p.add_argument("--in", dest="input", required=True, help="scored-pool file")
    p.add_argument("--model", help="MLP checkpoint for CA/FA")
    p.add_argument("--corpus", help="corpus for CA/FA")
    p.add_argument("--csv-prefix")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval, inputs=("input", "model", "corpus"))

    p = sub.add_parser("select", parents=[common], help="confidence-range data selection")
    p.add_argument("--in", dest="input", required=True, help="scored-pool file")
    p.add_argument("--mode", choices=sel.MODES, required=True)
    p.add_argument("--range", nargs="+", help="e.g. 'bottom[10,30)' or a preset name; defaults to the mode's recommendation")
    p.add_argument("--corpus", help="corpus for --adaptation-out")
    p.add_argument("--adaptation-out")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select, inputs=("input", "corpus"))

    p = sub.add_parser("adapt", parents=[common], help="KL-regularised adaptation of a toy acoustic model")
    p.add_argument("--base", required=True)
    p.add_argument("--pool", required=True, help="token data the manifest ids refer to")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kl-weight", type=float, default=0.5)
    _add_train_flags(p, lr=1e-3, epochs=10, batch_size=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adapt, inputs=("base", "pool", "manifest"))

    p = sub.add_parser("experiment", parents=[common], help="policy x seed adaptation experiment")
    p.add_argument("--config", help="ExperimentConfig JSON")
    p.add_argument("--policies", nargs="+", default=["all"], choices=["all", *ad.POLICIES])
    p.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at --seed")
    p.add_argument("--shift", type=float)
    p.add_argument("--kl-weight", type=float)
    p.add_argument("--adapt-epochs", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment, inputs=("config",))

    p = sub.add_parser("report", parents=[common], help="render an experiment or eval report as text")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report, inputs=("input",))
    return parser


def _resolved(args) -> dict:
    skip = {"func", "inputs", "from_run"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _fail(code, kind, message):
    print(json.dumps({"error": kind, "exit_code": code, "message": str(message)}), file=sys.stderr)
    return code


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.from_run:
            doc = json.loads(Path(args.from_run).read_text(encoding="utf-8"))
            args = parser.parse_args(doc["argv"])
        if not args.command:
            raise UsageError("missing subcommand")
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        inputs = _need(args, *args.inputs)
        summary = args.func(args)
        out = getattr(args, "out", None)
        run_path = args.run_json or Path(args.outdir or (Path(out).parent if out else "."), "run.json")
        Path(run_path).parent.mkdir(parents=True, exist_ok=True)
        _write_json(run_path, {
            "version": __version__,
            "command": args.command,
            "argv": _argv_from(args),
            "config": _resolved(args),
            "inputs": inputs,
            "summary": summary,
        })
        return 0
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    except NumericError as exc:
        return _fail(EXIT_NUMERIC, "numeric", exc)
    except (DataError, json.JSONDecodeError, KeyError) as exc:
        return _fail(EXIT_DATA, "data", exc)
    except ValueError as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    except OSError as exc:
        return _fail(EXIT_DATA, "io", exc)


def _argv_from(args) -> list[str]:
    """Rebuild a canonical argv from parsed arguments for replay."""
    argv = [args.command]
    for key, value in _resolved(args).items():
        if key == "command" or value is None or value is False:
            continue
        flag = "--in" if key == "input" else "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        elif isinstance(value, (list, tuple)):
            argv.append(flag)
            argv.extend(str(v) for v in value)
        else:
            argv.extend([flag, repr(value) if isinstance(value, float) else str(value)])
    return argv


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
