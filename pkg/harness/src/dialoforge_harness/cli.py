"""Harness command line: --stage {pretrain,finetune,predict,gradcheck,ablate}."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .ablation import run_ablation
from .config import GradMismatch, HarnessConfig, HarnessError
from .gradcheck import run_grad_check
from .training import finetune, load_checkpoint, predict, pretrain


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dialoforge-harness", description=__doc__)
    p.add_argument("--stage", required=True,
                   choices=["pretrain", "finetune", "predict", "gradcheck", "ablate"])
    p.add_argument("--config", type=str, default=None, help="HarnessConfig JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--samples", type=str, help="pretrain sample JSONL (pretrain)")
    p.add_argument("--qa", type=str, help="QA JSONL (finetune: train split; predict: eval set)")
    p.add_argument("--qa-val", dest="qa_val", type=str, default=None)
    p.add_argument("--qa-test", dest="qa_test", type=str, default=None)
    p.add_argument("--corpus", type=str, help="dialogue corpus JSONL")
    p.add_argument("--ckpt", type=str, help="checkpoint directory to load")
    p.add_argument("--out", type=str, help="output directory or file")
    p.add_argument("--ablate-configs", dest="ablate_configs", type=str, nargs="+",
                   help="corruption config JSONs from the primary `ablate` command")
    return p


def _config(args) -> HarnessConfig:
    cfg = HarnessConfig.load(args.config) if args.config else HarnessConfig()
    if args.seed is not None:
        cfg = HarnessConfig.from_record({**cfg.to_record(), "seed": args.seed})
    return cfg


def _require(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_"), None) is None]
    if missing:
        raise HarnessError(f"--stage {args.stage} requires: " + ", ".join(f"--{n}" for n in missing))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.stage == "pretrain":
            _require(args, "samples", "out")
            ckpt = pretrain(args.samples, cfg, args.out, log=lambda m: print(m, file=sys.stderr))
            print(json.dumps({"checkpoint": str(ckpt.path), "val_loss": ckpt.val_metric}))
        elif args.stage == "finetune":
            _require(args, "qa", "corpus", "out")
            ckpt = finetune(
                args.qa, args.corpus, cfg, args.out,
                init_from=args.ckpt, val_qa_path=args.qa_val,
                log=lambda m: print(m, file=sys.stderr),
            )
            print(json.dumps({"checkpoint": str(ckpt.path), "val_span_exact": ckpt.val_metric}))
        elif args.stage == "predict":
            _require(args, "qa", "corpus", "ckpt", "out")
            n = predict(args.qa, args.corpus, args.ckpt, args.out)
            print(json.dumps({"probs": args.out, "n": n}))
        elif args.stage == "gradcheck":
            reports = run_grad_check(seed=cfg.seed)
            print(json.dumps([
                {"objective": r.objective, "n_checked": r.n_checked,
                 "max_rel_error": r.max_rel_error}
                for r in reports
            ]))
        elif args.stage == "ablate":
            _require(args, "corpus", "qa", "qa-val", "qa-test", "ablate-configs", "out")
            rows = run_ablation(
                args.corpus, args.ablate_configs, args.qa, args.qa_val, args.qa_test,
                cfg, args.out, seed=cfg.seed, log=lambda m: print(m, file=sys.stderr),
            )
            print(json.dumps(rows))
        return 0
    except GradMismatch as e:
        print(f"gradcheck failed: {e}", file=sys.stderr)
        return 1
    except HarnessError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
