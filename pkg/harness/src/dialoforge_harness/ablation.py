"""Ablation runner: pretrain -> finetune -> predict -> score for each
corruption scheme, plus a no-pretrain baseline row.

The data pipeline is driven exclusively through the primary toolkit's CLI
and JSONL files; scoring uses its `decode` and `score` subcommands. Scores
are reported as-is: at desk scale the scheme ordering is informative, not
asserted.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

from .config import HarnessConfig, HarnessError
from .training import finetune, predict, pretrain

PRIMARY_CLI = [sys.executable, "-m", "dialoforge"]


def run_primary(*args: str) -> str:
    result = subprocess.run(
        [*PRIMARY_CLI, *args], capture_output=True, text=True
    )
    if result.returncode != 0:
        raise HarnessError(
            f"primary CLI failed ({' '.join(args[:2])}): {result.stderr.strip()}"
        )
    return result.stdout


def score_with_primary(probs_path, qa_path, corpus_path, work_dir) -> dict:
    preds = Path(work_dir) / "preds.jsonl"
    run_primary(
        "decode", "--probs", str(probs_path), "--qa", str(qa_path),
        "--corpus", str(corpus_path), "--out", str(preds),
    )
    out = run_primary("score", "--preds", str(preds), "--gold", str(qa_path))
    return json.loads(out)


def run_ablation(
    corpus_path: str | Path,
    config_paths: list[str | Path],
    qa_train: str | Path,
    qa_val: str | Path,
    qa_test: str | Path,
    cfg: HarnessConfig,
    out_dir: str | Path,
    seed: int = 0,
    log=print,
) -> list[dict]:
    """One row per corruption config plus the no-pretrain baseline."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []

    schemes: list[tuple[str, Path | None]] = [("no_pretrain", None)]
    schemes += [(Path(p).stem, Path(p)) for p in config_paths]

    for name, config_path in schemes:
        work = out / name
        work.mkdir(parents=True, exist_ok=True)
        init = None
        if config_path is not None:
            samples = work / "pretrain.jsonl"
            run_primary(
                "corrupt", "--corpus", str(corpus_path), "--config", str(config_path),
                "--seed", str(seed), "--out", str(samples),
            )
            ckpt = pretrain(samples, cfg, work / "ckpt_pretrain", log=None)
            init = ckpt.path
            if log:
                log(f"[{name}] pretrain val_loss={ckpt.val_metric:.4f}")
        tuned = finetune(
            qa_train, corpus_path, cfg, work / "ckpt_finetune",
            init_from=init, val_qa_path=qa_val, log=None,
        )
        probs = work / "probs.jsonl"
        predict(qa_test, corpus_path, tuned.path, probs)
        report = score_with_primary(probs, qa_test, corpus_path, work)
        row = {"scheme": name, "em": report["em"], "f1": report["f1"], "n": report["n"]}
        rows.append(row)
        if log:
            log(f"[{name}] test EM={row['em']:.2f} F1={row['f1']:.2f}")

    (out / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    if log:
        log(format_table(rows))
    return rows


def format_table(rows: list[dict]) -> str:
    lines = [f"{'scheme':<24} {'EM':>8} {'F1':>8}"]
    for row in rows:
        lines.append(f"{row['scheme']:<24} {row['em']:>8.2f} {row['f1']:>8.2f}")
    return "\n".join(lines)
