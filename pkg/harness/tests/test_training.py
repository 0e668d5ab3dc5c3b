import json
import subprocess
import sys

import pytest
import torch

from dialoforge_harness import HarnessConfig, finetune, load_checkpoint, predict, pretrain
from dialoforge_harness.config import HarnessError
from dialoforge_harness.data import Vocab, collate_pretrain, load_pretrain, load_qa, read_jsonl
from dialoforge_harness.model import build_model, masked_reconstruction_loss
from dialoforge_harness.training import pretrain_validation_loss, save_checkpoint

SMOKE = HarnessConfig(layers=2, hidden=32, heads=4, epochs=2, batch=16,
                      lr_pretrain=3e-4, lr_finetune=3e-4, dropout=0.1, seed=0)


def test_pretrain_reduces_loss(pipeline_files, tmp_path):
    vocab = Vocab.from_pretrain_file(pipeline_files["pretrain"])
    items = load_pretrain(pipeline_files["pretrain"], vocab, SMOKE.max_len)
    fresh = build_model(SMOKE, vocab)
    initial = pretrain_validation_loss(fresh, items, vocab, SMOKE.batch)
    ckpt = pretrain(pipeline_files["pretrain"], SMOKE, tmp_path / "ckpt")
    final = pretrain_validation_loss(ckpt.model, items, vocab, SMOKE.batch)
    assert final < initial


def test_zero_loss_mask_leaves_parameters_unchanged(tmp_path, pipeline_files):
    recs = read_jsonl(pipeline_files["pretrain"])[:6]
    for r in recs:
        r["loss_mask"] = [0] * len(r["loss_mask"])
        r["input"] = list(r["target"])
        r["ops"] = []
    path = tmp_path / "zeros.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in recs))
    ckpt = pretrain(path, SMOKE, tmp_path / "ckpt")
    fresh = build_model(SMOKE, ckpt.vocab)
    for (_, a), (_, b) in zip(ckpt.model.named_parameters(), fresh.named_parameters()):
        assert torch.equal(a, b)
    assert ckpt.val_metric == 0.0


def test_checkpoint_roundtrip_val_loss(pipeline_files, tmp_path):
    ckpt = pretrain(pipeline_files["pretrain"], SMOKE, tmp_path / "ckpt")
    loaded = load_checkpoint(tmp_path / "ckpt")
    assert loaded.val_metric == ckpt.val_metric
    items = load_pretrain(pipeline_files["pretrain"], loaded.vocab, SMOKE.max_len)
    n_val = max(1, int(len(items) * 0.1))
    recomputed = pretrain_validation_loss(loaded.model, items[:n_val], loaded.vocab, SMOKE.batch)
    assert abs(recomputed - ckpt.val_metric) < 1e-6
    layout = sorted(p.name for p in (tmp_path / "ckpt").iterdir())
    assert layout == ["config.json", "vocab.txt", "weights.bin"]


def test_checkpoint_fingerprint_guard(pipeline_files, tmp_path):
    pretrain(pipeline_files["pretrain"], SMOKE, tmp_path / "ckpt")
    vocab_file = tmp_path / "ckpt" / "vocab.txt"
    vocab_file.write_text(vocab_file.read_text() + "sneaky\n")
    with pytest.raises(HarnessError, match="fingerprint"):
        load_checkpoint(tmp_path / "ckpt")


def test_finetune_baseline_and_warm_start(pipeline_files, tmp_path):
    pre = pretrain(pipeline_files["pretrain"], SMOKE, tmp_path / "pre")
    warm = finetune(pipeline_files["qa_train"], pipeline_files["corpus"], SMOKE,
                    tmp_path / "warm", init_from=tmp_path / "pre",
                    val_qa_path=pipeline_files["qa_val"])
    cold = finetune(pipeline_files["qa_train"], pipeline_files["corpus"], SMOKE,
                    tmp_path / "cold", init_from=None,
                    val_qa_path=pipeline_files["qa_val"])
    assert 0.0 <= warm.val_metric <= 1.0
    assert 0.0 <= cold.val_metric <= 1.0
    # warm start reuses the pre-training vocabulary
    assert warm.vocab.itos == pre.vocab.itos


def test_predict_emits_normalized_probabilities(pipeline_files, tmp_path):
    pre = pretrain(pipeline_files["pretrain"], SMOKE, tmp_path / "pre")
    finetune(pipeline_files["qa_train"], pipeline_files["corpus"], SMOKE,
             tmp_path / "ft", init_from=tmp_path / "pre",
             val_qa_path=pipeline_files["qa_val"])
    out = tmp_path / "probs.jsonl"
    n = predict(pipeline_files["qa_test"], pipeline_files["corpus"], tmp_path / "ft", out)
    gold_n = len(read_jsonl(pipeline_files["qa_test"]))
    assert n == gold_n
    records = read_jsonl(out)
    assert len(records) == gold_n
    for rec in records:
        assert len(rec["p_start"]) == len(rec["p_end"])
        assert abs(sum(rec["p_start"]) - 1.0) < 1e-5
        assert abs(sum(rec["p_end"]) - 1.0) < 1e-5
        assert all(0.0 <= p <= 1.0 for p in rec["p_start"] + rec["p_end"])

    again = tmp_path / "probs2.jsonl"
    predict(pipeline_files["qa_test"], pipeline_files["corpus"], tmp_path / "ft", again)
    assert out.read_bytes() == again.read_bytes()


def test_probabilities_flow_through_primary_scorer(pipeline_files, tmp_path):
    pretrain(pipeline_files["pretrain"], SMOKE, tmp_path / "pre")
    finetune(pipeline_files["qa_train"], pipeline_files["corpus"], SMOKE,
             tmp_path / "ft", init_from=tmp_path / "pre",
             val_qa_path=pipeline_files["qa_val"])
    probs = tmp_path / "probs.jsonl"
    predict(pipeline_files["qa_test"], pipeline_files["corpus"], tmp_path / "ft", probs)
    preds = tmp_path / "preds.jsonl"
    r = subprocess.run(
        [sys.executable, "-m", "dialoforge", "decode", "--probs", str(probs),
         "--qa", str(pipeline_files["qa_test"]), "--corpus", str(pipeline_files["corpus"]),
         "--out", str(preds)],
        capture_output=True, text=True,
    )
    assert r.returncode == 0, r.stderr
    r = subprocess.run(
        [sys.executable, "-m", "dialoforge", "score", "--preds", str(preds),
         "--gold", str(pipeline_files["qa_test"])],
        capture_output=True, text=True,
    )
    assert r.returncode == 0, r.stderr
    report = json.loads(r.stdout)
    assert 0.0 <= report["em"] <= 100.0
    assert report["n"] == len(read_jsonl(pipeline_files["qa_test"]))


def test_harness_cli_stages(pipeline_files, tmp_path):
    def harness(*args):
        return subprocess.run(
            [sys.executable, "-m", "dialoforge_harness", *[str(a) for a in args]],
            capture_output=True, text=True,
        )

    cfg_path = tmp_path / "harness.json"
    cfg_path.write_text(json.dumps(SMOKE.to_record()))
    r = harness("--stage", "pretrain", "--config", cfg_path,
                "--samples", pipeline_files["pretrain"], "--out", tmp_path / "pre")
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["val_loss"] > 0
    r = harness("--stage", "finetune", "--config", cfg_path,
                "--qa", pipeline_files["qa_train"], "--qa-val", pipeline_files["qa_val"],
                "--corpus", pipeline_files["corpus"], "--ckpt", tmp_path / "pre",
                "--out", tmp_path / "ft")
    assert r.returncode == 0, r.stderr
    r = harness("--stage", "predict", "--qa", pipeline_files["qa_test"],
                "--corpus", pipeline_files["corpus"], "--ckpt", tmp_path / "ft",
                "--out", tmp_path / "probs.jsonl")
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["n"] > 0
    r = harness("--stage", "gradcheck", "--seed", "0")
    assert r.returncode == 0, r.stderr
    reports = json.loads(r.stdout)
    assert all(rep["max_rel_error"] <= 1e-4 for rep in reports)
    r = harness("--stage", "pretrain")  # missing required args
    assert r.returncode == 1
