"""Operator command line: generate, corrupt, build-qa, decode, score, stats, ablate.

Data goes to files or standard output; diagnostics go to standard error.
Exit codes: 0 success, 1 usage/validation/domain error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import random
import sys
from pathlib import Path

from . import corruption, dialogue, qa, squad_eval, synth
from .seeding import stable_seed

ENV_SEED = "DIALOFORGE_SEED"


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract reserves 2 for I/O.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


class _TrackExplicit(argparse.Action):
    """Remember which flags the user actually passed, so they can override
    values coming from a --config file."""

    def __call__(self, parser, namespace, values, option_string=None):
        # subcommands parse into a fresh namespace, so create the set lazily
        if not hasattr(namespace, "_explicit"):
            namespace._explicit = set()
        namespace._explicit.add(self.dest)
        setattr(namespace, self.dest, values)


def _default_seed() -> int:
    raw = os.environ.get(ENV_SEED)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{ENV_SEED} must be an integer, got {raw!r}")


# dests accepted per subcommand, for config-file key validation
_COMMAND_DESTS: dict[str, set[str]] = {}


def build_parser() -> _Parser:
    parser = _Parser(prog="dialoforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(p, name, *flags, **kwargs):
        kwargs.setdefault("action", _TrackExplicit)
        arg = p.add_argument(*flags, **kwargs)
        _COMMAND_DESTS[name].add(arg.dest)

    def new_command(name, help):
        p = sub.add_parser(name, help=help)
        _COMMAND_DESTS[name] = set()
        add(p, name, "--seed", type=int, default=None,
            help=f"master seed (default ${ENV_SEED} or 0)")
        add(p, name, "--config", type=str, default=None,
            help="JSON config file; explicit flags override its values")
        add(p, name, "--jobs", type=int, default=1, help="worker processes")
        return p

    g = new_command("generate", "generate a synthetic clinical dialogue corpus")
    add(g, "generate", "--n", type=int, required=True, help="number of dialogues")
    add(g, "generate", "--out", type=str, required=True, help="corpus JSONL output")
    add(g, "generate", "--truth-out", dest="truth_out", type=str, default=None,
        help="ground-truth JSONL output (default: <out>.truth.jsonl)")
    add(g, "generate", "--registry", type=str, default=None, help="topic registry JSON")
    add(g, "generate", "--topics-per-dialogue", dest="topics_per_dialogue", type=int,
        nargs=2, default=(2, 3), metavar=("LO", "HI"))
    add(g, "generate", "--turns-per-topic", dest="turns_per_topic", type=int,
        nargs=2, default=(4, 6), metavar=("LO", "HI"))
    add(g, "generate", "--disfluency-rate", dest="disfluency_rate", type=float, default=0.3)
    add(g, "generate", "--no-mention-rate", dest="no_mention_rate", type=float, default=0.2)

    c = new_command("corrupt", "corrupt a corpus into reconstruction samples")
    add(c, "corrupt", "--corpus", type=str, required=True)
    add(c, "corrupt", "--out", type=str, required=True, help="pretrain sample JSONL output")
    for field in corruption.CorruptionConfig.RATE_FIELDS:
        add(c, "corrupt", "--" + field.replace("_", "-"), dest=field, type=float, default=None)
    add(c, "corrupt", "--max-len", dest="max_len", type=int, default=None)
    add(c, "corrupt", "--infill-vocab", dest="infill_vocab", type=str, default=None,
        help="vocabulary file, one token per line (default: derived from the corpus)")

    b = new_command("build-qa", "build extractive QA samples from corpus + truth")
    add(b, "build-qa", "--corpus", type=str, required=True)
    add(b, "build-qa", "--truth", type=str, required=True)
    add(b, "build-qa", "--out", type=str, required=True)
    add(b, "build-qa", "--split", type=int, nargs=3, default=None,
        metavar=("TRAIN", "VAL", "TEST"),
        help="also write dialogue-disjoint splits of these sizes")
    add(b, "build-qa", "--split-dir", dest="split_dir", type=str, default=None,
        help="directory for split files (default: alongside --out)")

    d = new_command("decode", "decode spans from probability files")
    add(d, "decode", "--probs", type=str, required=True)
    add(d, "decode", "--qa", type=str, required=True)
    add(d, "decode", "--corpus", type=str, required=True)
    add(d, "decode", "--out", type=str, required=True)
    add(d, "decode", "--max-span-len", dest="max_span_len", type=int, default=30)

    s = new_command("score", "score predictions against gold QA answers")
    add(s, "score", "--preds", type=str, required=True)
    add(s, "score", "--gold", type=str, required=True)

    t = new_command("stats", "corpus statistics")
    add(t, "stats", "--corpus", type=str, required=True)

    a = new_command("ablate", "write the corruption-scheme ladder configs")
    add(a, "ablate", "--out-dir", dest="out_dir", type=str, required=True)

    return parser


def _load_config_overrides(args: argparse.Namespace) -> None:
    """Fill argument values from --config JSON; explicit flags win."""
    if not getattr(args, "config", None):
        return
    with open(args.config, "r", encoding="utf-8") as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise UsageError(f"config file {args.config} must hold a JSON object")
    allowed = _COMMAND_DESTS[args.command] - {"config"}
    unknown = set(cfg) - allowed
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key, value in cfg.items():
        if key in args._explicit:
            continue
        setattr(args, key, value)


# -- generate --

_WORKER_STATE: dict = {}


def _init_generate(cfg: synth.GenerationConfig, registry_record: dict):
    _WORKER_STATE["cfg"] = cfg
    _WORKER_STATE["registry"] = synth.TopicRegistry.from_record(registry_record)


def _generate_one(seed: int) -> tuple[dict, dict]:
    d, gt = synth.generate_dialogue(_WORKER_STATE["cfg"], seed, _WORKER_STATE["registry"])
    return dialogue.dialogue_to_record(d), synth.truth_to_record(gt)


def _cmd_generate(args) -> int:
    cfg = synth.GenerationConfig(
        topics_per_dialogue=tuple(args.topics_per_dialogue),
        turns_per_topic=tuple(args.turns_per_topic),
        disfluency_rate=args.disfluency_rate,
        no_mention_rate=args.no_mention_rate,
        seed=args.seed,
    )
    registry = synth.load_topic_registry(args.registry)
    truth_out = args.truth_out or args.out + ".truth.jsonl"
    seeds = (stable_seed(args.seed, i) for i in range(args.n))
    results = _parallel_map(
        _generate_one, seeds, args.jobs,
        initializer=_init_generate, initargs=(cfg, registry.to_record()),
    )
    n = 0
    with open(args.out, "w", encoding="utf-8", newline="\n") as fc, \
            open(truth_out, "w", encoding="utf-8", newline="\n") as ft:
        for drec, trec in results:
            fc.write(dialogue.dumps_record(drec) + "\n")
            ft.write(json.dumps(trec, ensure_ascii=False) + "\n")
            n += 1
    print(f"generate: wrote {n} dialogues to {args.out}, truth to {truth_out}", file=sys.stderr)
    return 0


# -- corrupt --

def _init_corrupt(cfg_record: dict, master_seed: int):
    _WORKER_STATE["cfg"] = corruption.CorruptionConfig.from_record(cfg_record)
    _WORKER_STATE["master_seed"] = master_seed


def _corrupt_one(dialogue_record: dict) -> dict:
    d = dialogue.dialogue_from_record(dialogue_record)
    rng = random.Random(stable_seed(_WORKER_STATE["master_seed"], d.id))
    sample = corruption.corrupt(dialogue.tokenize(d), _WORKER_STATE["cfg"], rng)
    return corruption.sample_to_record(sample)


def _cmd_corrupt(args) -> int:
    overrides = {}
    for key in corruption.CorruptionConfig.RATE_FIELDS:
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.max_len is not None:
        overrides["max_len"] = args.max_len
    infill_rate = overrides.get("token_infill_rate", corruption.CorruptionConfig.token_infill_rate)
    vocab: tuple[str, ...] = ()
    if infill_rate > 0:
        # an empty vocab in a config file means "derive from the corpus"
        if isinstance(args.infill_vocab, (list, tuple)) and args.infill_vocab:
            vocab = tuple(args.infill_vocab)
        elif isinstance(args.infill_vocab, str):
            vocab = tuple(
                line.strip()
                for line in Path(args.infill_vocab).read_text("utf-8").splitlines()
                if line.strip()
            )
        else:
            vocab = corruption.build_infill_vocab(dialogue.read_corpus(args.corpus))
    cfg = corruption.CorruptionConfig(seed=args.seed, infill_vocab=vocab, **overrides)
    records = (dialogue.dialogue_to_record(d) for d in dialogue.read_corpus(args.corpus))
    results = _parallel_map(
        _corrupt_one, records, args.jobs,
        initializer=_init_corrupt, initargs=(cfg.to_record(), args.seed),
    )
    n = 0
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        for rec in results:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    print(f"corrupt: wrote {n} samples to {args.out}", file=sys.stderr)
    return 0


# -- build-qa --

def _cmd_build_qa(args) -> int:
    truths = {gt.dialogue_id: gt for gt in synth.read_truths(args.truth)}
    samples: list[qa.QASample] = []
    for d in dialogue.read_corpus(args.corpus):
        gt = truths.get(d.id)
        if gt is None:
            raise qa.QAError(f"no ground truth for dialogue {d.id!r}")
        samples.extend(qa.build_qa(d, gt, seed=args.seed))
    qa.write_qa(samples, args.out)
    print(f"build-qa: wrote {len(samples)} samples to {args.out}", file=sys.stderr)
    if args.split:
        train, val, test = args.split
        spec = qa.SplitSpec(train=train, val=val, test=test, seed=args.seed)
        splits = qa.make_splits(samples, spec)
        out_dir = Path(args.split_dir) if args.split_dir else Path(args.out).parent
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = Path(args.out).stem
        for name, part in (("train", splits.train), ("val", splits.val), ("test", splits.test)):
            path = out_dir / f"{stem}.{name}.jsonl"
            qa.write_qa(part, path)
            print(f"build-qa: wrote {len(part)} samples to {path}", file=sys.stderr)
    return 0


# -- decode --

def _cmd_decode(args) -> int:
    qa_by_id = {s.id: s for s in qa.read_qa(args.qa)}
    surfaces: dict[str, list[str]] = {}
    for d in dialogue.read_corpus(args.corpus):
        surfaces[d.id] = dialogue.tokenize(d).surfaces()
    preds = []
    for record in squad_eval.read_probs(args.probs):
        sample = qa_by_id.get(record.qa_id)
        if sample is None:
            raise qa.QAError(f"probability record for unknown qa_id {record.qa_id!r}")
        pred = squad_eval.decode_span(record, max_span_len=args.max_span_len)
        pred = squad_eval.resolve_answer_text(pred, surfaces[sample.dialogue_id])
        preds.append(pred)
    squad_eval.write_predictions(preds, args.out)
    print(f"decode: wrote {len(preds)} predictions to {args.out}", file=sys.stderr)
    return 0


# -- score --

def _cmd_score(args) -> int:
    preds = list(squad_eval.read_predictions(args.preds))
    gold = [
        (s.id, s.answer.text if s.answer else None, s.attribute.value)
        for s in qa.read_qa(args.gold)
    ]
    report = squad_eval.score_corpus(preds, gold)
    print(json.dumps(report.to_record(), ensure_ascii=False))
    return 0


# -- stats --

def _cmd_stats(args) -> int:
    stats = synth.corpus_stats(dialogue.read_corpus(args.corpus))
    print(json.dumps(stats.to_record(), ensure_ascii=False))
    return 0


# -- ablate --

ABLATION_LADDER = (
    ("01_token_mask", {"token_mask_rate": 0.05}),
    ("02_plus_infill", {"token_mask_rate": 0.05, "token_infill_rate": 0.05}),
    ("03_plus_speaker", {
        "token_mask_rate": 0.05, "token_infill_rate": 0.05,
        "speaker_mask_rate": 0.10, "speaker_permute_rate": 0.10,
    }),
    ("04_plus_utterance", {
        "token_mask_rate": 0.05, "token_infill_rate": 0.05,
        "speaker_mask_rate": 0.10, "speaker_permute_rate": 0.10,
        "utterance_mask_rate": 0.10, "intra_topic_permute_rate": 0.05,
    }),
)


def _cmd_ablate(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    zeros = {field: 0.0 for field in corruption.CorruptionConfig.RATE_FIELDS}
    for name, rates in ABLATION_LADDER:
        record = {**zeros, **rates, "max_len": 512, "infill_vocab": [], "seed": args.seed}
        path = out_dir / f"{name}.json"
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(record, f, indent=2, ensure_ascii=False)
            f.write("\n")
        print(f"ablate: wrote {path}", file=sys.stderr)
    return 0


def _parallel_map(fn, items, jobs: int, initializer, initargs):
    if jobs < 1:
        raise UsageError(f"--jobs must be >= 1, got {jobs}")
    if jobs == 1:
        initializer(*initargs)
        for item in items:
            yield fn(item)
        return
    with multiprocessing.Pool(jobs, initializer=initializer, initargs=initargs) as pool:
        yield from pool.imap(fn, items, chunksize=64)


_COMMANDS = {
    "generate": _cmd_generate,
    "corrupt": _cmd_corrupt,
    "build-qa": _cmd_build_qa,
    "decode": _cmd_decode,
    "score": _cmd_score,
    "stats": _cmd_stats,
    "ablate": _cmd_ablate,
}

_DOMAIN_ERRORS = (
    dialogue.DialogueError,
    synth.SynthError,
    corruption.CorruptionError,
    qa.QAError,
    squad_eval.EvalError,
    UsageError,
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "_explicit"):
            args._explicit = set()
        if not args.command:
            parser.print_usage(sys.stderr)
            print("error: a subcommand is required", file=sys.stderr)
            return 1
        _load_config_overrides(args)
        if args.seed is None:
            args.seed = _default_seed()
        return _COMMANDS[args.command](args)
    except _DOMAIN_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
