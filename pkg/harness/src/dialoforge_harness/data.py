"""Readers for the pipeline's JSONL interchange files and batch assembly.

The pipeline serializes each utterance as ``<u> {speaker}: w1 w2 ...`` with
content tokens split on whitespace and leading/trailing ``.,?!;`` characters
detached; QA answer spans index into that stream. The reader reproduces the
published rule from the corpus file so token indices line up, and every QA
span is cross-checked against the answer text it must re-join to.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .config import ShapeError, VocabOverflow, VOCAB_LIMIT

PAD = "<pad>"
UNK = "<unk>"
NO_ANSWER = "<no_answer>"
SEP = "<sep>"
SPECIALS = (PAD, UNK, NO_ANSWER, SEP, "<mask>", "<u>")

DETACHED_PUNCT = ".,?!;"


def split_content(text: str) -> list[str]:
    out: list[str] = []
    for chunk in text.split():
        lo, hi = 0, len(chunk)
        lead: list[str] = []
        while lo < hi and chunk[lo] in DETACHED_PUNCT:
            lead.append(chunk[lo])
            lo += 1
        trail: list[str] = []
        while hi > lo and chunk[hi - 1] in DETACHED_PUNCT:
            trail.append(chunk[hi - 1])
            hi -= 1
        out.extend(lead)
        if hi > lo:
            out.append(chunk[lo:hi])
        out.extend(reversed(trail))
    return out


def dialogue_tokens(record: dict) -> list[str]:
    """Token stream of a corpus-file dialogue record."""
    tokens: list[str] = []
    for utt in record["utterances"]:
        tokens.append("<u>")
        tokens.append(utt["speaker"] + ":")
        tokens.extend(split_content(utt["text"]))
    return tokens


def rejoin(tokens: list[str]) -> str:
    out: list[str] = []
    for t in tokens:
        if out and len(t) == 1 and t in DETACHED_PUNCT:
            out[-1] += t
        else:
            out.append(t)
    return " ".join(out)


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(json.loads(line))
    return out


class Vocab:
    """Deterministic token <-> id mapping with reserved specials."""

    def __init__(self, tokens: list[str]):
        extras = sorted(set(tokens) - set(SPECIALS))
        self.itos = list(SPECIALS) + extras
        if len(self.itos) > VOCAB_LIMIT:
            raise VocabOverflow(f"vocabulary of {len(self.itos)} exceeds limit {VOCAB_LIMIT}")
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        self.pad_id = self.stoi[PAD]
        self.unk_id = self.stoi[UNK]

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, token: str) -> int:
        return self.stoi.get(token, self.unk_id)

    def encode_all(self, tokens: list[str]) -> list[int]:
        return [self.encode(t) for t in tokens]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "Vocab":
        itos = Path(path).read_text(encoding="utf-8").splitlines()
        v = Vocab.__new__(Vocab)
        v.itos = itos
        v.stoi = {t: i for i, t in enumerate(itos)}
        v.pad_id = v.stoi[PAD]
        v.unk_id = v.stoi[UNK]
        return v

    @staticmethod
    def from_pretrain_file(path: str | Path) -> "Vocab":
        tokens: set[str] = set()
        for rec in read_jsonl(path):
            tokens.update(rec["target"])
            tokens.update(rec["input"])
        return Vocab(sorted(tokens))


# -- reconstruction samples --

@dataclass
class PretrainItem:
    input_ids: list[int]
    target_ids: list[int]
    loss_mask: list[int]


def load_pretrain(path: str | Path, vocab: Vocab, max_len: int) -> list[PretrainItem]:
    items = []
    for rec in read_jsonl(path):
        if not (len(rec["input"]) == len(rec["target"]) == len(rec["loss_mask"])):
            raise ShapeError(f"sample {rec['id']}: input/target/loss_mask lengths differ")
        items.append(PretrainItem(
            input_ids=vocab.encode_all(rec["input"][:max_len]),
            target_ids=vocab.encode_all(rec["target"][:max_len]),
            loss_mask=[int(b) for b in rec["loss_mask"][:max_len]],
        ))
    return items


def collate_pretrain(items: list[PretrainItem], pad_id: int) -> dict[str, torch.Tensor]:
    width = max(len(it.input_ids) for it in items)
    ids = torch.full((len(items), width), pad_id, dtype=torch.long)
    target = torch.full((len(items), width), pad_id, dtype=torch.long)
    loss_mask = torch.zeros((len(items), width), dtype=torch.bool)
    pad_mask = torch.zeros((len(items), width), dtype=torch.bool)
    for r, it in enumerate(items):
        n = len(it.input_ids)
        ids[r, :n] = torch.tensor(it.input_ids)
        target[r, :n] = torch.tensor(it.target_ids)
        loss_mask[r, :n] = torch.tensor(it.loss_mask, dtype=torch.bool)
        pad_mask[r, :n] = True
    return {"ids": ids, "target": target, "loss_mask": loss_mask, "pad_mask": pad_mask}


# -- QA windows --

@dataclass
class QAWindow:
    qa_id: str
    input_ids: list[int]
    # index of the first dialogue token inside the window
    dialogue_offset: int
    n_dialogue: int
    # gold start/end in emission space (0 = No-Answer, i >= 1 = dialogue
    # token i - 1); None when the gold span fell outside the window
    gold: tuple[int, int] | None
    has_answer: bool = False


@dataclass
class QADataset:
    windows: list[QAWindow]
    dropped: int = 0


def load_qa(
    qa_path: str | Path,
    corpus_path: str | Path,
    vocab: Vocab,
    max_len: int,
    keep_out_of_window: bool = False,
) -> QADataset:
    """Build model windows: [<no_answer>] question [<sep>] dialogue-tokens.

    Training drops samples whose gold span exceeds the window (counted in
    ``dropped``); prediction keeps every sample.
    """
    tokens_by_id = {rec["id"]: dialogue_tokens(rec) for rec in read_jsonl(corpus_path)}
    windows: list[QAWindow] = []
    dropped = 0
    for rec in read_jsonl(qa_path):
        dial = tokens_by_id.get(rec["dialogue_id"])
        if dial is None:
            raise ShapeError(f"qa sample {rec['id']}: dialogue {rec['dialogue_id']} not in corpus")
        q_tokens = split_content(rec["question"])
        head = [NO_ANSWER] + q_tokens + [SEP]
        budget = max_len - len(head)
        if budget < 1:
            raise ShapeError(f"qa sample {rec['id']}: question alone exceeds max_len")
        dial_window = dial[:budget]
        answer = rec.get("answer")
        gold: tuple[int, int] | None = (0, 0)
        has_answer = False
        if answer is not None:
            has_answer = True
            start, end = answer["start_token"], answer["end_token"]
            if rejoin(dial[start : end + 1]) != answer["text"]:
                raise ShapeError(
                    f"qa sample {rec['id']}: span does not re-join to its answer text"
                )
            if end < len(dial_window):
                gold = (start + 1, end + 1)
            else:
                gold = None
        if gold is None:
            dropped += 1
            if not keep_out_of_window:
                continue
        windows.append(QAWindow(
            qa_id=rec["id"],
            input_ids=vocab.encode_all(head + dial_window),
            dialogue_offset=len(head),
            n_dialogue=len(dial_window),
            gold=gold,
            has_answer=has_answer,
        ))
    return QADataset(windows=windows, dropped=dropped)


def collate_qa(windows: list[QAWindow], pad_id: int) -> dict[str, torch.Tensor]:
    width = max(len(w.input_ids) for w in windows)
    ids = torch.full((len(windows), width), pad_id, dtype=torch.long)
    pad_mask = torch.zeros((len(windows), width), dtype=torch.bool)
    # positions allowed to emit probability mass: the reserved No-Answer
    # slot (window position 0) and every dialogue token
    emit_mask = torch.zeros((len(windows), width), dtype=torch.bool)
    gold_start = torch.full((len(windows),), -1, dtype=torch.long)
    gold_end = torch.full((len(windows),), -1, dtype=torch.long)
    for r, w in enumerate(windows):
        n = len(w.input_ids)
        ids[r, :n] = torch.tensor(w.input_ids)
        pad_mask[r, :n] = True
        emit_mask[r, 0] = True
        emit_mask[r, w.dialogue_offset : w.dialogue_offset + w.n_dialogue] = True
        if w.gold is not None:
            s, e = w.gold
            gold_start[r] = 0 if s == 0 else w.dialogue_offset + (s - 1)
            gold_end[r] = 0 if e == 0 else w.dialogue_offset + (e - 1)
    return {
        "ids": ids,
        "pad_mask": pad_mask,
        "emit_mask": emit_mask,
        "gold_start": gold_start,
        "gold_end": gold_end,
    }
