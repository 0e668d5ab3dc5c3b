import subprocess
import sys

import pytest


def primary(*args):
    """Invoke the data toolkit CLI; the harness only sees its files."""
    result = subprocess.run(
        [sys.executable, "-m", "dialoforge", *[str(a) for a in args]],
        capture_output=True, text=True,
    )
    assert result.returncode == 0, result.stderr
    return result


@pytest.fixture(scope="session")
def pipeline_files(tmp_path_factory):
    """Small corpus + pretrain samples + QA splits built via the primary CLI."""
    root = tmp_path_factory.mktemp("files")
    corpus = root / "corpus.jsonl"
    primary("generate", "--n", 80, "--seed", 11,
            "--topics-per-dialogue", 1, 2, "--turns-per-topic", 2, 4,
            "--out", corpus)
    primary("corrupt", "--corpus", corpus, "--seed", 11, "--out", root / "pretrain.jsonl")
    primary("build-qa", "--corpus", corpus, "--truth", f"{corpus}.truth.jsonl",
            "--seed", 11, "--out", root / "qa.jsonl", "--split", 250, 50, 50)
    return {
        "corpus": corpus,
        "pretrain": root / "pretrain.jsonl",
        "qa": root / "qa.jsonl",
        "qa_train": root / "qa.train.jsonl",
        "qa_val": root / "qa.val.jsonl",
        "qa_test": root / "qa.test.jsonl",
    }
