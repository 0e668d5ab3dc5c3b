"""Extractive QA dataset construction over generated dialogues.

Turns GroundTruth facts into question/answer samples with token-level spans
(indices into the tokenized dialogue stream), emits No-Answer samples for
absent (symptom, attribute) pairs, and provides dialogue-disjoint splits plus
nested low-resource training subsets.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .dialogue import Dialogue, TokenKind, content_tokens_with_spans, smart_join, tokenize
from .seeding import stable_seed
from .synth import AttributeKind, GroundTruth


class QAError(ValueError):
    pass


class SpanAlignmentError(QAError):
    pass


class InsufficientData(QAError):
    pass


class LadderTooLarge(QAError):
    pass


@dataclass(frozen=True)
class AnswerSpan:
    text: str
    start_token: int
    end_token: int  # inclusive


@dataclass(frozen=True)
class QASample:
    id: str
    dialogue_id: str
    question: str
    symptom: str
    attribute: AttributeKind
    answer: AnswerSpan | None


# Three paraphrases per attribute; the builder picks one per sample.
QUESTION_TEMPLATES: dict[AttributeKind, tuple[str, ...]] = {
    AttributeKind.TIME: (
        "How long has the patient been experiencing the {symptom}?",
        "When did the {symptom} start?",
        "For how long has the {symptom} been present?",
    ),
    AttributeKind.ACTIVITIES: (
        "What activities trigger the {symptom}?",
        "What brings on the {symptom}?",
        "Under which activities does the {symptom} occur or worsen?",
    ),
    AttributeKind.EXTENT: (
        "What is the extent of the {symptom}?",
        "How severe is the {symptom}?",
        "How serious is the {symptom}?",
    ),
    AttributeKind.FREQUENCY: (
        "How frequently did you experience the {symptom}?",
        "How often does the {symptom} occur?",
        "At what frequency does the {symptom} happen?",
    ),
    AttributeKind.LOCATION: (
        "What is the location of the {symptom}?",
        "Where is the {symptom} located?",
        "Where does the patient feel the {symptom}?",
    ),
}


def _char_span_to_token_span(
    spans: Sequence[tuple[str, int, int]], char_start: int, char_end: int
) -> tuple[int, int]:
    """Map a character span of an utterance onto content-token indices."""
    first = last = None
    for i, (_, s, e) in enumerate(spans):
        if s == char_start:
            first = i
        if e == char_end:
            last = i
    if first is None or last is None or last < first:
        raise SpanAlignmentError(
            f"char span ({char_start}, {char_end}) does not land on token boundaries"
        )
    return first, last


def build_qa(
    d: Dialogue,
    gt: GroundTruth,
    templates: dict[AttributeKind, tuple[str, ...]] | None = None,
    seed: int = 0,
) -> list[QASample]:
    """One positive sample per fact, one No-Answer sample per absent pair.

    Character spans are converted to token indices into the tokenized
    dialogue stream; a fact whose span does not align to token boundaries
    indicates a generator bug and raises SpanAlignmentError.
    """
    if gt.dialogue_id != d.id:
        raise QAError(f"ground truth {gt.dialogue_id!r} does not belong to dialogue {d.id!r}")
    if templates is None:
        templates = QUESTION_TEMPLATES
    rng = random.Random(stable_seed(seed, d.id))

    t = tokenize(d)
    # global index of each utterance's first content token
    utt_content_start: list[int] = []
    prev_utt = -1
    for gi, tok in enumerate(t.tokens):
        if tok.kind is TokenKind.CONTENT and tok.utt_index != prev_utt:
            utt_content_start.append(gi)
            prev_utt = tok.utt_index

    samples: list[QASample] = []
    n = 0
    for fact in gt.facts:
        utt = d.utterances[fact.utt_index]
        spans = content_tokens_with_spans(utt.text)
        lo, hi = fact.char_span
        if utt.text[lo:hi] != fact.entity:
            raise SpanAlignmentError(
                f"fact entity {fact.entity!r} does not match utterance slice {utt.text[lo:hi]!r}"
            )
        first, last = _char_span_to_token_span(spans, lo, hi)
        start = utt_content_start[fact.utt_index] + first
        end = utt_content_start[fact.utt_index] + last
        joined = smart_join(tok.surface for tok in t.tokens[start : end + 1])
        if joined != fact.entity:
            raise SpanAlignmentError(
                f"token span re-join {joined!r} does not reproduce entity {fact.entity!r}"
            )
        question = rng.choice(templates[fact.attribute]).format(symptom=fact.symptom)
        samples.append(
            QASample(
                id=f"{d.id}:q{n}",
                dialogue_id=d.id,
                question=question,
                symptom=fact.symptom,
                attribute=fact.attribute,
                answer=AnswerSpan(text=fact.entity, start_token=start, end_token=end),
            )
        )
        n += 1
    for symptom, attribute in gt.absent:
        question = rng.choice(templates[attribute]).format(symptom=symptom)
        samples.append(
            QASample(
                id=f"{d.id}:q{n}",
                dialogue_id=d.id,
                question=question,
                symptom=symptom,
                attribute=attribute,
                answer=None,
            )
        )
        n += 1
    return samples


def build_qa_corpus(
    pairs: Iterable[tuple[Dialogue, GroundTruth]],
    templates: dict[AttributeKind, tuple[str, ...]] | None = None,
    seed: int = 0,
) -> Iterator[QASample]:
    for d, gt in pairs:
        yield from build_qa(d, gt, templates, seed)


@dataclass(frozen=True)
class SplitSpec:
    train: int = 40000
    val: int = 3000
    test: int = 3000
    seed: int = 0

    def __post_init__(self):
        for name in ("train", "val", "test"):
            if getattr(self, name) < 0:
                raise QAError(f"split size {name} must be >= 0")


@dataclass(frozen=True)
class Splits:
    train: tuple[QASample, ...]
    val: tuple[QASample, ...]
    test: tuple[QASample, ...]


def make_splits(samples: Sequence[QASample], spec: SplitSpec) -> Splits:
    """Dialogue-disjoint partition with exact split sizes.

    Dialogues are shuffled by seed and assigned whole to one split; at a
    split boundary, the overflowing dialogue's surplus samples are dropped
    rather than shared, keeping dialogues from crossing splits.
    """
    needed = spec.train + spec.val + spec.test
    if len(samples) < needed:
        raise InsufficientData(
            f"need {needed} samples ({spec.train}/{spec.val}/{spec.test}), have {len(samples)}"
        )
    by_dialogue: dict[str, list[QASample]] = {}
    order: list[str] = []
    for s in samples:
        if s.dialogue_id not in by_dialogue:
            by_dialogue[s.dialogue_id] = []
            order.append(s.dialogue_id)
        by_dialogue[s.dialogue_id].append(s)
    random.Random(spec.seed).shuffle(order)

    out: list[list[QASample]] = []
    queue = iter(order)
    for size in (spec.train, spec.val, spec.test):
        bucket: list[QASample] = []
        while len(bucket) < size:
            try:
                did = next(queue)
            except StopIteration:
                raise InsufficientData(
                    f"ran out of dialogues filling a split of {size} "
                    f"(short by {size - len(bucket)})"
                )
            bucket.extend(by_dialogue[did][: size - len(bucket)])
        out.append(bucket)
    return Splits(train=tuple(out[0]), val=tuple(out[1]), test=tuple(out[2]))


@dataclass(frozen=True)
class SubsetLadder:
    sizes: tuple[int, ...] = (3000, 5000, 10000, 20000, 30000, 40000)

    def __post_init__(self):
        if not self.sizes:
            raise QAError("ladder must have at least one size")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise QAError(f"ladder sizes must be strictly increasing: {self.sizes}")
        if self.sizes[0] <= 0:
            raise QAError("ladder sizes must be positive")


def subsample_train(
    train: Sequence[QASample], ladder: SubsetLadder, seed: int = 0
) -> list[tuple[QASample, ...]]:
    """Nested low-resource subsets: prefixes of one seeded shuffle."""
    if ladder.sizes[-1] > len(train):
        raise LadderTooLarge(
            f"ladder max {ladder.sizes[-1]} exceeds train size {len(train)}"
        )
    shuffled = list(train)
    random.Random(seed).shuffle(shuffled)
    return [tuple(shuffled[:size]) for size in ladder.sizes]


# -- QA JSONL --

def qa_to_record(s: QASample) -> dict:
    answer = None
    if s.answer is not None:
        answer = {
            "text": s.answer.text,
            "start_token": s.answer.start_token,
            "end_token": s.answer.end_token,
        }
    return {
        "id": s.id,
        "dialogue_id": s.dialogue_id,
        "question": s.question,
        "symptom": s.symptom,
        "attribute": s.attribute.value,
        "answer": answer,
    }


def qa_from_record(rec: dict) -> QASample:
    answer = None
    if rec.get("answer") is not None:
        a = rec["answer"]
        answer = AnswerSpan(text=a["text"], start_token=a["start_token"], end_token=a["end_token"])
    return QASample(
        id=rec["id"],
        dialogue_id=rec["dialogue_id"],
        question=rec["question"],
        symptom=rec["symptom"],
        attribute=AttributeKind(rec["attribute"]),
        answer=answer,
    )


def write_qa(samples: Iterable[QASample], path: str | Path | IO[str]) -> int:
    n = 0
    if hasattr(path, "write"):
        for s in samples:
            path.write(json.dumps(qa_to_record(s), ensure_ascii=False) + "\n")
            n += 1
        return n
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in samples:
            f.write(json.dumps(qa_to_record(s), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_qa(path: str | Path) -> Iterator[QASample]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield qa_from_record(json.loads(line))
