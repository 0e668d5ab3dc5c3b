"""Conversation-aware corruption strategies for reconstruction pre-training.

Six manipulations over a tokenized dialogue: token masking, token infilling,
speaker masking, speaker permutation, whole-utterance masking, and intra-topic
utterance permutation. ``corrupt`` composes them (token/speaker edits first,
then utterance-level operations) into an aligned (input, target, loss_mask)
triple, with one OpRecord per affected unit so every corruption is auditable
and reversible.

Sampling uses exact counts (k = half-up round of rate * eligible) rather than
per-unit Bernoulli draws, so per-dialogue rate invariants hold exactly.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .dialogue import (
    BOUNDARY_SURFACE,
    MASK_SURFACE,
    Dialogue,
    Token,
    TokenKind,
    TokenizedDialogue,
    speaker_token_surface,
    tokenize,
)
from .seeding import stable_seed

OP_KINDS = (
    "token_mask",
    "token_infill",
    "speaker_mask",
    "speaker_permute",
    "utt_mask",
    "utt_permute",
)

INFILL_MAX_REDRAWS = 8


class CorruptionError(ValueError):
    pass


class ConfigError(CorruptionError):
    pass


class TooShort(CorruptionError):
    pass


@dataclass(frozen=True)
class CorruptionConfig:
    token_mask_rate: float = 0.05
    token_infill_rate: float = 0.05
    speaker_mask_rate: float = 0.10
    speaker_permute_rate: float = 0.10
    utterance_mask_rate: float = 0.10
    intra_topic_permute_rate: float = 0.05
    max_len: int = 512
    infill_vocab: tuple[str, ...] = ()
    seed: int = 0

    RATE_FIELDS = (
        "token_mask_rate",
        "token_infill_rate",
        "speaker_mask_rate",
        "speaker_permute_rate",
        "utterance_mask_rate",
        "intra_topic_permute_rate",
    )

    def __post_init__(self):
        for name in self.RATE_FIELDS:
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.max_len < 8:
            raise ConfigError(f"max_len must be >= 8, got {self.max_len}")

    def require_vocab(self) -> None:
        # enforced when infilling actually runs, so a bare default config
        # stays constructible before a corpus vocabulary is attached
        if self.token_infill_rate > 0 and not self.infill_vocab:
            raise ConfigError("infill_vocab must be non-empty when token_infill_rate > 0")

    def to_record(self) -> dict:
        return {
            "token_mask_rate": self.token_mask_rate,
            "token_infill_rate": self.token_infill_rate,
            "speaker_mask_rate": self.speaker_mask_rate,
            "speaker_permute_rate": self.speaker_permute_rate,
            "utterance_mask_rate": self.utterance_mask_rate,
            "intra_topic_permute_rate": self.intra_topic_permute_rate,
            "max_len": self.max_len,
            "infill_vocab": list(self.infill_vocab),
            "seed": self.seed,
        }

    @staticmethod
    def from_record(rec: dict) -> "CorruptionConfig":
        known = {
            "token_mask_rate", "token_infill_rate", "speaker_mask_rate",
            "speaker_permute_rate", "utterance_mask_rate", "intra_topic_permute_rate",
            "max_len", "infill_vocab", "seed",
        }
        unknown = set(rec) - known
        if unknown:
            raise ConfigError(f"unknown corruption config keys: {sorted(unknown)}")
        rec = dict(rec)
        if "infill_vocab" in rec:
            rec["infill_vocab"] = tuple(rec["infill_vocab"])
        return CorruptionConfig(**rec)


@dataclass(frozen=True)
class OpRecord:
    """One corruption event over a half-open token range of the corrupted
    stream. ``original`` holds the pre-corruption surfaces the range
    replaced; ``utts`` the original utterance indices involved."""

    kind: str
    start: int
    end: int
    original: tuple[str, ...]
    utts: tuple[int, ...] = ()

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "start": self.start,
            "end": self.end,
            "original": list(self.original),
        }


@dataclass(frozen=True)
class PretrainSample:
    dialogue_id: str
    input: tuple[str, ...]
    target: tuple[str, ...]
    loss_mask: tuple[int, ...]
    ops: tuple[OpRecord, ...]
    # Selections that could not be executed (single-speaker dialogues,
    # exhausted permutation partners, infill redraw failures). Not part of
    # the wire format.
    skips: dict[str, int] = field(default_factory=dict, compare=False)


def exact_count(rate: float, n_eligible: int) -> int:
    """Half-up round of rate * n_eligible, computed exactly."""
    if n_eligible < 0:
        raise ValueError("n_eligible must be >= 0")
    return int(Fraction(rate) * n_eligible + Fraction(1, 2))


def select_units(n_eligible: int, rate: float, rng: random.Random) -> set[int]:
    """Sample exactly round(rate * n_eligible) distinct indices uniformly."""
    if not (0.0 <= rate <= 1.0):
        raise ConfigError(f"rate must be in [0, 1], got {rate}")
    k = exact_count(rate, n_eligible)
    return set(rng.sample(range(n_eligible), k))


class _Block:
    """One utterance block: ``<u> {speaker}: w1 w2 ...`` under corruption."""

    __slots__ = (
        "orig_index", "topic_id", "speaker", "content",
        "orig_speaker", "orig_content", "speaker_masked", "utt_masked",
    )

    def __init__(self, orig_index: int, topic_id: int, speaker: str, content: list[str]):
        self.orig_index = orig_index
        self.topic_id = topic_id
        self.orig_speaker = speaker
        self.orig_content = tuple(content)
        self.speaker = speaker
        self.content = list(content)
        self.speaker_masked = False
        self.utt_masked = False

    def __len__(self) -> int:
        return 2 + len(self.content)

    def surfaces(self) -> list[str]:
        return [BOUNDARY_SURFACE, self.speaker, *self.content]

    def orig_surfaces(self) -> list[str]:
        return [BOUNDARY_SURFACE, self.orig_speaker, *self.orig_content]


class _Workspace:
    def __init__(self, t: TokenizedDialogue, max_utts: int | None = None):
        blocks: list[_Block] = []
        cur: list[str] | None = None
        speaker = ""
        topic_ids = t.topic_ids or tuple(0 for _ in range(t.num_utterances))
        for tok in t.tokens:
            if tok.kind is TokenKind.BOUNDARY:
                if cur is not None:
                    blocks.append(_Block(len(blocks), topic_ids[len(blocks)], speaker, cur))
                cur = []
            elif tok.kind is TokenKind.SPEAKER:
                speaker = tok.surface
            else:
                assert cur is not None
                cur.append(tok.surface)
        if cur is not None:
            blocks.append(_Block(len(blocks), topic_ids[len(blocks)], speaker, cur))
        if max_utts is not None:
            blocks = blocks[:max_utts]
        self.blocks = blocks
        # slot s holds block slot_blocks[s]; utterance permutation reorders this
        self.slot_blocks = list(range(len(blocks)))
        self.skips: dict[str, int] = {}
        self.token_ops: list[tuple[str, int, int, str]] = []     # kind, block, offset, original
        self.speaker_ops: list[tuple[str, int, str]] = []        # kind, block, original
        self.utt_mask_ops: list[int] = []                        # block
        self.swap_ops: list[tuple[int, int, int, int]] = []      # block_u, block_v, slot_lo, slot_hi
        self.speaker_labels = sorted({b.orig_speaker[:-1] for b in blocks})

    def skip(self, kind: str, n: int = 1) -> None:
        self.skips[kind] = self.skips.get(kind, 0) + n

    def content_slots(self) -> list[tuple[int, int]]:
        return [(b.orig_index, j) for b in self.blocks for j in range(len(b.content))]

    # -- passes, in composition order --

    def token_mask_pass(self, rate: float, rng: random.Random) -> None:
        slots = self.content_slots()
        for i in sorted(select_units(len(slots), rate, rng)):
            b, j = slots[i]
            block = self.blocks[b]
            self.token_ops.append(("token_mask", b, j, block.content[j]))
            block.content[j] = MASK_SURFACE

    def token_infill_pass(self, rate: float, vocab: Sequence[str], rng: random.Random) -> None:
        touched = {(kind_b_j[1], kind_b_j[2]) for kind_b_j in self.token_ops}
        slots = [s for s in self.content_slots() if s not in touched]
        for i in sorted(select_units(len(slots), rate, rng)):
            b, j = slots[i]
            block = self.blocks[b]
            original = block.content[j]
            for _ in range(INFILL_MAX_REDRAWS):
                replacement = rng.choice(vocab)
                if replacement != original:
                    self.token_ops.append(("token_infill", b, j, original))
                    block.content[j] = replacement
                    break
            else:
                self.skip("token_infill")

    def speaker_mask_pass(self, rate: float, rng: random.Random) -> None:
        for b in sorted(select_units(len(self.blocks), rate, rng)):
            block = self.blocks[b]
            self.speaker_ops.append(("speaker_mask", b, block.speaker))
            block.speaker = MASK_SURFACE
            block.speaker_masked = True

    def speaker_permute_pass(self, rate: float, rng: random.Random) -> None:
        if len(self.speaker_labels) < 2:
            if rate > 0 and exact_count(rate, len(self.blocks)) > 0:
                self.skip("speaker_permute")
            return
        eligible = [b.orig_index for b in self.blocks if not b.speaker_masked]
        for i in sorted(select_units(len(eligible), rate, rng)):
            b = eligible[i]
            block = self.blocks[b]
            label = block.orig_speaker[:-1]
            other = rng.choice([s for s in self.speaker_labels if s != label])
            self.speaker_ops.append(("speaker_permute", b, block.speaker))
            block.speaker = speaker_token_surface(other)

    def utterance_mask_pass(self, rate: float, rng: random.Random) -> None:
        for b in sorted(select_units(len(self.blocks), rate, rng)):
            block = self.blocks[b]
            block.content = [MASK_SURFACE] * len(block.content)
            block.utt_masked = True
            self.utt_mask_ops.append(b)

    def intra_topic_permute_pass(self, rate: float, rng: random.Random) -> None:
        groups: dict[int, list[int]] = {}
        for block in self.blocks:
            if not block.utt_masked:
                groups.setdefault(block.topic_id, []).append(block.orig_index)
        eligible = sorted(b for members in groups.values() if len(members) >= 2 for b in members)
        selected = sorted(select_units(len(eligible), rate, rng))
        block_slot = {b: s for s, b in enumerate(self.slot_blocks)}
        used: set[int] = set()
        for i in selected:
            u = eligible[i]
            if u in used:
                self.skip("utt_permute")
                continue
            partners = [v for v in groups[self.blocks[u].topic_id] if v != u and v not in used]
            if not partners:
                self.skip("utt_permute")
                continue
            v = rng.choice(partners)
            su, sv = block_slot[u], block_slot[v]
            self.slot_blocks[su], self.slot_blocks[sv] = self.slot_blocks[sv], self.slot_blocks[su]
            block_slot[u], block_slot[v] = sv, su
            used.update((u, v))
            self.swap_ops.append((u, v, min(su, sv), max(su, sv)))

    # -- final assembly --

    def eligible_counts(self) -> dict[str, int]:
        """Per-strategy eligible-unit counts, for rate-exactness auditing."""
        n_content = sum(len(b.orig_content) for b in self.blocks)
        n_utts = len(self.blocks)
        n_token_masked = sum(1 for op in self.token_ops if op[0] == "token_mask")
        n_speaker_masked = sum(1 for b in self.blocks if b.speaker_masked)
        groups: dict[int, int] = {}
        for b in self.blocks:
            if not b.utt_masked:
                groups[b.topic_id] = groups.get(b.topic_id, 0) + 1
        n_permutable = sum(n for n in groups.values() if n >= 2)
        return {
            "token_mask": n_content,
            "token_infill": n_content - n_token_masked,
            "speaker_mask": n_utts,
            "speaker_permute": n_utts - n_speaker_masked if len(self.speaker_labels) >= 2 else 0,
            "utt_mask": n_utts,
            "utt_permute": n_permutable,
        }

    def finish(self, dialogue_id: str) -> PretrainSample:
        target: list[str] = []
        orig_start: dict[int, int] = {}
        for block in self.blocks:
            orig_start[block.orig_index] = len(target)
            target.extend(block.orig_surfaces())

        input_: list[str] = []
        final_start: dict[int, int] = {}
        slot_start: list[int] = []
        for s, b in enumerate(self.slot_blocks):
            slot_start.append(len(input_))
            final_start[b] = len(input_)
            input_.extend(self.blocks[b].surfaces())
        slot_start.append(len(input_))
        assert len(input_) == len(target)

        ops: list[OpRecord] = []
        for kind, b, j, original in self.token_ops:
            pos = final_start[b] + 2 + j
            ops.append(OpRecord(kind, pos, pos + 1, (original,), (b,)))
        for kind, b, original in self.speaker_ops:
            pos = final_start[b] + 1
            ops.append(OpRecord(kind, pos, pos + 1, (original,), (b,)))
        # token/speaker records double as application order for restore();
        # keep kinds grouped the way the passes ran
        ops.sort(key=lambda op: (OP_KINDS.index(op.kind), op.start))
        for b in self.utt_mask_ops:
            start = final_start[b]
            end = start + len(self.blocks[b])
            ops.append(OpRecord("utt_mask", start, end, tuple(self.blocks[b].orig_surfaces()), (b,)))
        for u, v, slo, shi in self.swap_ops:
            start, end = slot_start[slo], slot_start[shi + 1]
            ops.append(OpRecord("utt_permute", start, end, tuple(target[start:end]), (u, v)))

        loss_mask = [0] * len(input_)
        for op in ops:
            for i in range(op.start, op.end):
                loss_mask[i] = 1

        return PretrainSample(
            dialogue_id=dialogue_id,
            input=tuple(input_),
            target=tuple(target),
            loss_mask=tuple(loss_mask),
            ops=tuple(ops),
            skips=dict(self.skips),
        )

    def output_tokens(self) -> list[Token]:
        out: list[Token] = []
        for s, b in enumerate(self.slot_blocks):
            block = self.blocks[b]
            out.append(Token(BOUNDARY_SURFACE, TokenKind.BOUNDARY, s, 0))
            kind = TokenKind.MASK if block.speaker == MASK_SURFACE else TokenKind.SPEAKER
            out.append(Token(block.speaker, kind, s, 1))
            for j, surface in enumerate(block.content):
                kind = TokenKind.MASK if surface == MASK_SURFACE else TokenKind.CONTENT
                out.append(Token(surface, kind, s, 2 + j))
        return out


def _single_pass(t: TokenizedDialogue, apply) -> tuple[list[Token], list[OpRecord]]:
    ws = _Workspace(t)
    apply(ws)
    sample = ws.finish(t.dialogue_id)
    return ws.output_tokens(), list(sample.ops)


def token_mask(t: TokenizedDialogue, rate: float, rng: random.Random):
    """Replace round(rate * n_content) content tokens with the mask token."""
    return _single_pass(t, lambda ws: ws.token_mask_pass(rate, rng))


def token_infill(t: TokenizedDialogue, rate: float, vocab: Sequence[str], rng: random.Random):
    """Replace content tokens with random different vocabulary tokens."""
    if rate > 0 and not vocab:
        raise ConfigError("token_infill requires a non-empty vocabulary")
    return _single_pass(t, lambda ws: ws.token_infill_pass(rate, vocab, rng))


def speaker_mask(t: TokenizedDialogue, rate: float, rng: random.Random):
    """Mask the speaker token of round(rate * n_utterances) utterances."""
    return _single_pass(t, lambda ws: ws.speaker_mask_pass(rate, rng))


def speaker_permute(t: TokenizedDialogue, rate: float, rng: random.Random):
    """Swap selected utterances' speakers for a different in-dialogue label."""
    return _single_pass(t, lambda ws: ws.speaker_permute_pass(rate, rng))


def utterance_mask(t: TokenizedDialogue, rate: float, rng: random.Random):
    """Mask every content token of the selected utterances."""
    return _single_pass(t, lambda ws: ws.utterance_mask_pass(rate, rng))


def intra_topic_permute(t: TokenizedDialogue, rate: float, rng: random.Random):
    """Exchange selected utterances with another utterance of the same topic."""
    return _single_pass(t, lambda ws: ws.intra_topic_permute_pass(rate, rng))


def truncate_utterances(t: TokenizedDialogue, max_len: int) -> int:
    """Number of whole leading utterances whose tokens fit within max_len."""
    total = 0
    n = 0
    count = 0
    for tok in t.tokens:
        if tok.kind is TokenKind.BOUNDARY and count:
            if total + count > max_len:
                return n
            total += count
            n += 1
            count = 0
        count += 1
    if count and total + count <= max_len:
        n += 1
    return n


def corrupt(
    t: TokenizedDialogue,
    cfg: CorruptionConfig,
    rng: random.Random | None = None,
) -> PretrainSample:
    """Compose all six strategies into an aligned reconstruction sample.

    The dialogue is truncated to whole utterances fitting cfg.max_len before
    any corruption; token and speaker manipulations run first, utterance-level
    operations afterwards. Deterministic given (t, cfg, seed).
    """
    cfg.require_vocab()
    if rng is None:
        rng = random.Random(cfg.seed)
    n_utts = truncate_utterances(t, cfg.max_len)
    if n_utts < 1:
        raise TooShort(
            f"dialogue {t.dialogue_id!r}: no utterance fits within max_len={cfg.max_len}"
        )
    ws = _Workspace(t, max_utts=n_utts)
    ws.token_mask_pass(cfg.token_mask_rate, rng)
    if cfg.token_infill_rate > 0:
        ws.token_infill_pass(cfg.token_infill_rate, cfg.infill_vocab, rng)
    ws.speaker_mask_pass(cfg.speaker_mask_rate, rng)
    ws.speaker_permute_pass(cfg.speaker_permute_rate, rng)
    ws.utterance_mask_pass(cfg.utterance_mask_rate, rng)
    ws.intra_topic_permute_pass(cfg.intra_topic_permute_rate, rng)
    return ws.finish(t.dialogue_id)


def audit_eligible_counts(t: TokenizedDialogue, cfg: CorruptionConfig, sample: PretrainSample) -> dict[str, int]:
    """Recompute per-strategy eligible counts for a corrupted sample."""
    ws = _Workspace(t, max_utts=truncate_utterances(t, cfg.max_len))
    for op in sample.ops:
        if op.kind == "token_mask":
            ws.token_ops.append(("token_mask", op.utts[0], 0, op.original[0]))
        elif op.kind == "speaker_mask":
            ws.blocks[op.utts[0]].speaker_masked = True
        elif op.kind == "utt_mask":
            ws.blocks[op.utts[0]].utt_masked = True
    return ws.eligible_counts()


def restore(sample: PretrainSample) -> list[str]:
    """Overlay op originals onto the input, in application order.

    Reproduces the target exactly; utterance-level records carry whole-range
    originals, so later overlays supersede token edits inside moved spans.
    """
    out = list(sample.input)
    for op in sample.ops:
        original = list(op.original)
        if len(original) != op.end - op.start:
            raise CorruptionError(
                f"op {op.kind} range [{op.start}, {op.end}) does not match "
                f"{len(original)} original surfaces"
            )
        out[op.start:op.end] = original
    return out


def corrupt_corpus(
    dialogues: Iterable[Dialogue],
    cfg: CorruptionConfig,
    master_seed: int,
) -> Iterator[PretrainSample]:
    """Corrupt a dialogue stream; per-record seed = stable_seed(master_seed, id)."""
    for d in dialogues:
        rng = random.Random(stable_seed(master_seed, d.id))
        yield corrupt(tokenize(d), cfg, rng)


def build_infill_vocab(dialogues: Iterable[Dialogue]) -> tuple[str, ...]:
    """Sorted distinct content surfaces of a corpus, for token infilling."""
    vocab: set[str] = set()
    for d in dialogues:
        for tok in tokenize(d).tokens:
            if tok.kind is TokenKind.CONTENT:
                vocab.add(tok.surface)
    return tuple(sorted(vocab))


# -- pretrain sample JSONL --

def sample_to_record(s: PretrainSample) -> dict:
    return {
        "id": s.dialogue_id,
        "input": list(s.input),
        "target": list(s.target),
        "loss_mask": list(s.loss_mask),
        "ops": [op.to_record() for op in s.ops],
    }


def sample_from_record(rec: dict) -> PretrainSample:
    ops = tuple(
        OpRecord(o["kind"], o["start"], o["end"], tuple(o["original"]))
        for o in rec["ops"]
    )
    return PretrainSample(
        dialogue_id=rec["id"],
        input=tuple(rec["input"]),
        target=tuple(rec["target"]),
        loss_mask=tuple(rec["loss_mask"]),
        ops=ops,
    )


def write_samples(samples: Iterable[PretrainSample], path: str | Path | IO[str]) -> int:
    n = 0
    if hasattr(path, "write"):
        for s in samples:
            path.write(json.dumps(sample_to_record(s), ensure_ascii=False) + "\n")
            n += 1
        return n
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in samples:
            f.write(json.dumps(sample_to_record(s), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_samples(path: str | Path) -> Iterator[PretrainSample]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield sample_from_record(json.loads(line))
