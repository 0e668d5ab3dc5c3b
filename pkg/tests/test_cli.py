import json
import subprocess
import sys

import pytest

from dialoforge import ProbRecord, read_corpus, tokenize
from dialoforge.corruption import CorruptionConfig, read_samples
from dialoforge.qa import read_qa
from dialoforge.squad_eval import write_probs


def run_cli(*args, env=None):
    return subprocess.run(
        [sys.executable, "-m", "dialoforge", *[str(a) for a in args]],
        capture_output=True, text=True, env=env,
    )


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """A small generate -> corrupt -> build-qa run shared by CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus.jsonl"
    samples = root / "samples.jsonl"
    qa_file = root / "qa.jsonl"
    r = run_cli("generate", "--n", 20, "--seed", 7, "--out", corpus)
    assert r.returncode == 0, r.stderr
    r = run_cli("corrupt", "--corpus", corpus, "--out", samples, "--seed", 7)
    assert r.returncode == 0, r.stderr
    r = run_cli("build-qa", "--corpus", corpus, "--truth", f"{corpus}.truth.jsonl",
                "--out", qa_file, "--seed", 7)
    assert r.returncode == 0, r.stderr
    return root, corpus, samples, qa_file


def test_generate_outputs(pipeline):
    _, corpus, samples, qa_file = pipeline
    assert sum(1 for _ in read_corpus(corpus)) == 20
    assert sum(1 for _ in read_samples(samples)) == 20
    assert sum(1 for _ in read_qa(qa_file)) > 20


def test_generate_determinism(pipeline, tmp_path):
    _, corpus, _, _ = pipeline
    again = tmp_path / "again.jsonl"
    r = run_cli("generate", "--n", 20, "--seed", 7, "--out", again)
    assert r.returncode == 0
    assert again.read_bytes() == corpus.read_bytes()


def test_jobs_parallel_identical(pipeline, tmp_path):
    _, corpus, samples, _ = pipeline
    par_corpus = tmp_path / "par.jsonl"
    r = run_cli("generate", "--n", 20, "--seed", 7, "--jobs", 4, "--out", par_corpus)
    assert r.returncode == 0, r.stderr
    assert par_corpus.read_bytes() == corpus.read_bytes()
    par_samples = tmp_path / "par_samples.jsonl"
    r = run_cli("corrupt", "--corpus", corpus, "--out", par_samples, "--seed", 7, "--jobs", 4)
    assert r.returncode == 0, r.stderr
    assert par_samples.read_bytes() == samples.read_bytes()


def test_seed_env_var(pipeline, tmp_path):
    import os

    _, corpus, _, _ = pipeline
    out = tmp_path / "env.jsonl"
    env = {**os.environ, "DIALOFORGE_SEED": "7"}
    r = run_cli("generate", "--n", 20, "--out", out, env=env)
    assert r.returncode == 0, r.stderr
    assert out.read_bytes() == corpus.read_bytes()


def test_corrupt_validation_exit_code(pipeline):
    _, corpus, _, _ = pipeline
    r = run_cli("corrupt", "--corpus", corpus, "--out", "/dev/null",
                "--token-mask-rate", 1.5)
    assert r.returncode == 1
    assert "token_mask_rate" in r.stderr


def test_config_file_and_flag_override(pipeline, tmp_path):
    _, corpus, _, _ = pipeline
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"token_mask_rate": 2.0, "token_infill_rate": 0.0}))
    out = tmp_path / "out.jsonl"
    # config alone is invalid
    r = run_cli("corrupt", "--corpus", corpus, "--out", out, "--config", cfg_path)
    assert r.returncode == 1 and "token_mask_rate" in r.stderr
    # explicit flag overrides the config value
    r = run_cli("corrupt", "--corpus", corpus, "--out", out, "--config", cfg_path,
                "--token-mask-rate", 0.05)
    assert r.returncode == 0, r.stderr


def test_config_unknown_key_rejected(pipeline, tmp_path):
    _, corpus, _, _ = pipeline
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"bogus_key": 1}))
    r = run_cli("corrupt", "--corpus", corpus, "--out", "/dev/null", "--config", cfg_path)
    assert r.returncode == 1
    assert "bogus_key" in r.stderr


def test_stats_command(pipeline):
    _, corpus, _, _ = pipeline
    r = run_cli("stats", "--corpus", corpus)
    assert r.returncode == 0, r.stderr
    stats = json.loads(r.stdout)
    assert stats["n_dialogues"] == 20
    assert 100 < stats["mean_words"] < 500


def test_score_perfect_predictions(pipeline, tmp_path):
    _, _, _, qa_file = pipeline
    preds_path = tmp_path / "preds.jsonl"
    with open(preds_path, "w") as f:
        for s in read_qa(qa_file):
            answer = s.answer.text if s.answer else None
            f.write(json.dumps({"qa_id": s.id, "answer_text": answer}) + "\n")
    r = run_cli("score", "--preds", preds_path, "--gold", qa_file)
    assert r.returncode == 0, r.stderr
    report = json.loads(r.stdout)
    assert report["em"] == 100.0 and report["f1"] == 100.0
    assert report["n"] == sum(1 for _ in read_qa(qa_file))
    assert set(report["per_attribute"]) <= {"time", "activities", "extent", "frequency", "location"}


def test_decode_and_score_roundtrip(pipeline, tmp_path):
    root, corpus, _, qa_file = pipeline
    dialogues = {d.id: tokenize(d).surfaces() for d in read_corpus(corpus)}
    probs = []
    for s in read_qa(qa_file):
        n = 1 + len(dialogues[s.dialogue_id])
        ps = [0.0] * n
        pe = [0.0] * n
        if s.answer is None:
            ps[0] = pe[0] = 1.0
        else:
            ps[s.answer.start_token + 1] = 1.0
            pe[s.answer.end_token + 1] = 1.0
        probs.append(ProbRecord(s.id, tuple(ps), tuple(pe)))
    probs_path = tmp_path / "probs.jsonl"
    write_probs(probs, probs_path)
    preds_path = tmp_path / "preds.jsonl"
    r = run_cli("decode", "--probs", probs_path, "--qa", qa_file,
                "--corpus", corpus, "--out", preds_path)
    assert r.returncode == 0, r.stderr
    r = run_cli("score", "--preds", preds_path, "--gold", qa_file)
    assert r.returncode == 0, r.stderr
    report = json.loads(r.stdout)
    assert report["em"] == 100.0 and report["f1"] == 100.0


def test_build_qa_splits(pipeline, tmp_path):
    _, corpus, _, _ = pipeline
    out = tmp_path / "qa.jsonl"
    r = run_cli("build-qa", "--corpus", corpus, "--truth", f"{corpus}.truth.jsonl",
                "--out", out, "--seed", 7, "--split", 60, 20, 20)
    assert r.returncode == 0, r.stderr
    train = list(read_qa(tmp_path / "qa.train.jsonl"))
    val = list(read_qa(tmp_path / "qa.val.jsonl"))
    test = list(read_qa(tmp_path / "qa.test.jsonl"))
    assert (len(train), len(val), len(test)) == (60, 20, 20)
    t_ids = {s.dialogue_id for s in train}
    assert t_ids.isdisjoint({s.dialogue_id for s in val})
    assert t_ids.isdisjoint({s.dialogue_id for s in test})


def test_ablate_writes_ladder(tmp_path):
    out_dir = tmp_path / "ablate"
    r = run_cli("ablate", "--out-dir", out_dir, "--seed", 7)
    assert r.returncode == 0, r.stderr
    files = sorted(p.name for p in out_dir.glob("*.json"))
    assert files == [
        "01_token_mask.json", "02_plus_infill.json",
        "03_plus_speaker.json", "04_plus_utterance.json",
    ]
    configs = [CorruptionConfig.from_record(json.loads((out_dir / f).read_text())) for f in files]
    assert configs[0].token_mask_rate == 0.05
    assert configs[0].token_infill_rate == 0.0
    assert configs[1].token_infill_rate == 0.05
    assert configs[2].speaker_mask_rate == 0.10
    assert configs[2].utterance_mask_rate == 0.0
    assert configs[3].utterance_mask_rate == 0.10
    assert configs[3].intra_topic_permute_rate == 0.05


def test_usage_error_exit_1():
    r = run_cli("corrupt")  # missing required flags
    assert r.returncode == 1
    assert "usage" in r.stderr.lower()
    r = run_cli("no-such-command")
    assert r.returncode == 1
    r = run_cli()
    assert r.returncode == 1


def test_missing_file_exit_2(tmp_path):
    r = run_cli("stats", "--corpus", tmp_path / "nope.jsonl")
    assert r.returncode == 2
