import json

import pytest

from seqconf.cli import run

FAST = ["--epochs", "2"]


def _ok(argv):
    assert run([str(a) for a in argv]) == 0, argv


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    p = {k: d / v for k, v in dict(
        train="train.jsonl", test="test.jsonl", lstm="lstm.json", mlp="mlp.json", scored="scored.jsonl",
        eval="eval.json", manifest="manifest.json", src="src.jsonl", pool="pool.jsonl", am="am.json",
        decoded="decoded.jsonl", pool_scored="pool_scored.jsonl", adapt_manifest="am_manifest.json",
        adapted="adapted.json").items()}
    _ok(["gen-cc", "--n", 120, "--seed", 1, "--out", p["train"], "--run-json", d / "r_gen.json"])
    _ok(["gen-cc", "--n", 40, "--seed", 2, "--out", p["test"], "--run-json", d / "r_gen2.json"])
    _ok(["train-lstm", "--in", p["train"], "--cells", 8, *FAST, "--out", p["lstm"], "--run-json", d / "r_lstm.json"])
    _ok(["train-mlp", "--in", p["train"], "--hidden", 8, *FAST, "--out", p["mlp"], "--run-json", d / "r_mlp.json"])
    _ok(["score", "--model", p["lstm"], "--in", p["test"], "--out", p["scored"], "--run-json", d / "r_score.json"])
    _ok(["eval", "--in", p["scored"], "--model", p["mlp"], "--corpus", p["test"], "--out", p["eval"],
         "--run-json", d / "r_eval.json"])
    _ok(["select", "--mode", "supervised", "--in", p["scored"], "--out", p["manifest"], "--run-json", d / "r_sel.json"])
    _ok(["gen-am", "--n", 60, "--out", p["src"], "--run-json", d / "r_am.json"])
    _ok(["gen-am", "--n", 40, "--shift", 2.0, "--stream", 2, "--prefix", "pool", "--out", p["pool"],
         "--run-json", d / "r_am2.json"])
    _ok(["train-am", "--in", p["src"], *FAST, "--out", p["am"], "--run-json", d / "r_tam.json"])
    _ok(["decode", "--model", p["am"], "--in", p["pool"], "--out", p["decoded"], "--run-json", d / "r_dec.json"])
    _ok(["score", "--model", p["lstm"], "--in", p["decoded"], "--out", p["pool_scored"], "--run-json", d / "r_s2.json"])
    _ok(["select", "--mode", "combined", "--in", p["pool_scored"], "--out", p["adapt_manifest"],
         "--run-json", d / "r_sel2.json"])
    _ok(["adapt", "--base", p["am"], "--pool", p["pool"], "--manifest", p["adapt_manifest"], *FAST,
         "--out", p["adapted"], "--run-json", d / "r_adapt.json"])
    return d, p


def test_pipeline_outputs(pipeline):
    d, p = pipeline
    for path in p.values():
        assert path.is_file(), path
    manifest = json.loads(p["manifest"].read_text())
    assert manifest["policy"]["ranges"] == [{"anchor": "bottom", "lo_pct": 10.0, "hi_pct": 30.0}]
    assert len(manifest["ids"]) == 8  # floor(.3*40) - floor(.1*40)
    rj = json.loads((d / "r_score.json").read_text())
    assert rj["command"] == "score" and set(rj["inputs"]) == {str(p["lstm"]), str(p["test"])}
    ev = json.loads(p["eval"].read_text())
    assert len(ev["bins"]) == 10 and len(ev["ca_fa"]) == 101


@pytest.mark.parametrize("name", ["r_gen.json", "r_lstm.json", "r_mlp.json", "r_score.json", "r_sel.json",
                                  "r_tam.json", "r_adapt.json", "r_sel2.json", "r_dec.json"])
def test_replay_is_byte_identical(pipeline, name):
    d, _ = pipeline
    rj = json.loads((d / name).read_text())
    out = next(rj["argv"][i + 1] for i, a in enumerate(rj["argv"]) if a == "--out")
    before = open(out, "rb").read()
    import os
    os.remove(out)
    assert run(["--from-run", str(d / name)]) == 0
    assert open(out, "rb").read() == before


def test_inputs_not_mutated(pipeline):
    d, p = pipeline
    before = p["scored"].read_bytes()
    _ok(["select", "--mode", "semi_supervised", "--in", p["scored"], "--out", d / "m2.json"])
    assert p["scored"].read_bytes() == before
    assert json.loads((d / "m2.json").read_text())["label_source"] == "hypothesis"


def test_report_renders(pipeline, capsys):
    d, p = pipeline
    _ok(["report", "--in", p["eval"], "--out", d / "eval.txt"])
    assert "pearson" in (d / "eval.txt").read_text()


def _err(capsys):
    line = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(line)


def test_exit_codes(tmp_path, capsys):
    assert run(["score", "--model", str(tmp_path / "nope.json"), "--in", "x", "--out", "y"]) == 2
    assert "--model" in _err(capsys)["message"]
    assert run(["gen-cc", "--bogus"]) == 2
    assert _err(capsys)["error"] == "usage"
    assert run([]) == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a"}\n')
    assert run(["select", "--mode", "supervised", "--in", str(bad), "--out", str(tmp_path / "m.json")]) == 3
    msg = _err(capsys)
    assert msg["error"] == "data" and "bad.jsonl" in msg["message"]
    nan = tmp_path / "nan.jsonl"
    nan.write_text('{"id": "a", "reference": ["x"], "hypothesis": [{"text": "x", "am_score": NaN, '
                   '"lm_score": 0, "duration_ms": 5, "phone_count": 1}]}\n')
    assert run(["train-mlp", "--in", str(nan), "--out", str(tmp_path / "m.json")]) in (3, 4)


def test_experiment_report_shape(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_source": 40, "n_cc": 40, "n_pool": 30, "n_test": 20,
                               "base_train": {"epochs": 2}, "cc_train": {"epochs": 1},
                               "kld": {"lambda": 0.5, "train": {"epochs": 1}}}))
    out = tmp_path / "exp.json"
    _ok(["experiment", "--config", cfg, "--policies", "all", "--seeds", 2, "--out", out])
    rep = json.loads(out.read_text())
    assert len(rep["policies"]) == 7
    for p in rep["policies"]:
        assert len(p["runs"]) == 2 and set(p["median"]) >= {"wer", "werr"}
        assert {"wer", "werr", "n_utterances", "n_hours_equivalent"} <= set(p["runs"][0])
    assert rep["metadata"]["seeds"] == [0, 1]
    _ok(["report", "--in", out])
