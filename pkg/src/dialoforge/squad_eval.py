"""SQuAD-style answer normalization, EM/F1 scoring, and span decoding.

The decoder consumes per-question start/end probability vectors in which
position 0 is reserved for No-Answer and positions i >= 1 index dialogue
tokens; it picks the span maximizing p_start[i] * p_end[j] and falls back to
No-Answer when the reserved position's product strictly beats every span.
"""

from __future__ import annotations

import json
import re
import string
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence


class EvalError(ValueError):
    pass


class LengthMismatch(EvalError):
    pass


class DuplicatePrediction(EvalError):
    pass


@dataclass(frozen=True)
class ProbRecord:
    qa_id: str
    p_start: tuple[float, ...]
    p_end: tuple[float, ...]

    def __post_init__(self):
        if len(self.p_start) != len(self.p_end):
            raise LengthMismatch(
                f"{self.qa_id}: p_start has {len(self.p_start)} entries, "
                f"p_end has {len(self.p_end)}"
            )
        for name, vec in (("p_start", self.p_start), ("p_end", self.p_end)):
            if any(not (0.0 <= v <= 1.0) for v in vec):
                raise EvalError(f"{self.qa_id}: {name} entries must lie in [0, 1]")


@dataclass(frozen=True)
class Prediction:
    qa_id: str
    answer_text: str | None
    span: tuple[int, int] | None = None


@dataclass(frozen=True)
class ScoreReport:
    em: float
    f1: float
    n: int
    per_attribute: dict[str, dict[str, float]]

    def to_record(self) -> dict:
        return {
            "em": self.em,
            "f1": self.f1,
            "n": self.n,
            "per_attribute": {k: dict(v) for k, v in sorted(self.per_attribute.items())},
        }


_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(s: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    s = s.lower()
    s = s.translate(_PUNCT_TABLE)
    s = _ARTICLE_RE.sub(" ", s)
    return " ".join(s.split())


def _tokens(s: str) -> list[str]:
    return normalize_answer(s).split()


def exact_match(pred: str | None, gold: str | None) -> int:
    if pred is None or gold is None:
        return int(pred is None and gold is None)
    return int(normalize_answer(pred) == normalize_answer(gold))


def token_f1(pred: str | None, gold: str | None) -> float:
    if pred is None or gold is None:
        return float(pred is None and gold is None)
    pred_toks = _tokens(pred)
    gold_toks = _tokens(gold)
    if not pred_toks or not gold_toks:
        return float(pred_toks == gold_toks)
    common = Counter(pred_toks) & Counter(gold_toks)
    n_same = sum(common.values())
    if n_same == 0:
        return 0.0
    precision = n_same / len(pred_toks)
    recall = n_same / len(gold_toks)
    return 2 * precision * recall / (precision + recall)


def decode_span(r: ProbRecord, max_span_len: int = 30) -> Prediction:
    """Max-product span decoding with a reserved No-Answer position.

    Over all spans 1 <= i <= j with length <= max_span_len, picks the
    argmax of p_start[i] * p_end[j]; ties break toward smaller i, then
    smaller j. Returns No-Answer when p_start[0] * p_end[0] strictly
    exceeds the best span product (or no span exists).
    """
    if max_span_len < 1:
        raise EvalError(f"max_span_len must be >= 1, got {max_span_len}")
    n = len(r.p_start)
    best: tuple[int, int] | None = None
    best_p = -1.0
    for i in range(1, n):
        ps = r.p_start[i]
        for j in range(i, min(i + max_span_len, n)):
            p = ps * r.p_end[j]
            if p > best_p:
                best_p = p
                best = (i, j)
    if best is None or r.p_start[0] * r.p_end[0] > best_p:
        return Prediction(qa_id=r.qa_id, answer_text=None, span=None)
    return Prediction(qa_id=r.qa_id, answer_text=None, span=best)


def resolve_answer_text(pred: Prediction, dialogue_surfaces: Sequence[str]) -> Prediction:
    """Fill in the answer text for a decoded span.

    Span positions are 1-based over the probability vector; position i maps
    to dialogue token i - 1.
    """
    from .dialogue import smart_join

    if pred.span is None:
        return pred
    i, j = pred.span
    if not (1 <= i <= j <= len(dialogue_surfaces)):
        raise EvalError(
            f"{pred.qa_id}: span ({i}, {j}) out of range for {len(dialogue_surfaces)} tokens"
        )
    text = smart_join(dialogue_surfaces[i - 1 : j])
    return Prediction(qa_id=pred.qa_id, answer_text=text, span=pred.span)


def _round2(x: float) -> float:
    return float(Decimal(repr(x)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def score_corpus(
    predictions: Iterable[Prediction],
    gold: Iterable[tuple[str, str | None, str]],
) -> ScoreReport:
    """Corpus EM/F1 as percentages with a per-attribute breakdown.

    ``gold`` yields (qa_id, answer_text_or_None, attribute). A gold id with
    no prediction scores 0/0; a duplicated prediction id is an error.
    """
    preds: dict[str, str | None] = {}
    for p in predictions:
        if p.qa_id in preds:
            raise DuplicatePrediction(f"duplicate prediction for {p.qa_id!r}")
        preds[p.qa_id] = p.answer_text

    n = 0
    em_sum = 0.0
    f1_sum = 0.0
    by_attr: dict[str, list[tuple[float, float]]] = {}
    seen: set[str] = set()
    for qa_id, answer, attribute in gold:
        if qa_id in seen:
            raise EvalError(f"duplicate gold id {qa_id!r}")
        seen.add(qa_id)
        n += 1
        if qa_id in preds:
            em = float(exact_match(preds[qa_id], answer))
            f1 = token_f1(preds[qa_id], answer)
        else:
            em, f1 = 0.0, 0.0
        em_sum += em
        f1_sum += f1
        by_attr.setdefault(attribute, []).append((em, f1))
    if n == 0:
        raise EvalError("no gold samples to score")

    per_attribute = {
        attr: {
            "em": _round2(100.0 * sum(e for e, _ in pairs) / len(pairs)),
            "f1": _round2(100.0 * sum(f for _, f in pairs) / len(pairs)),
            "n": len(pairs),
        }
        for attr, pairs in by_attr.items()
    }
    return ScoreReport(
        em=_round2(100.0 * em_sum / n),
        f1=_round2(100.0 * f1_sum / n),
        n=n,
        per_attribute=per_attribute,
    )


# -- JSONL wire formats --

def prob_to_record(r: ProbRecord) -> dict:
    return {"qa_id": r.qa_id, "p_start": list(r.p_start), "p_end": list(r.p_end)}


def prob_from_record(rec: dict) -> ProbRecord:
    return ProbRecord(
        qa_id=rec["qa_id"],
        p_start=tuple(rec["p_start"]),
        p_end=tuple(rec["p_end"]),
    )


def read_probs(path: str | Path) -> Iterator[ProbRecord]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield prob_from_record(json.loads(line))


def write_probs(records: Iterable[ProbRecord], path: str | Path | IO[str]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(json.dumps(prob_to_record(r), ensure_ascii=False) + "\n")
            n += 1
    return n


def prediction_to_record(p: Prediction) -> dict:
    return {"qa_id": p.qa_id, "answer_text": p.answer_text}


def read_predictions(path: str | Path) -> Iterator[Prediction]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                yield Prediction(qa_id=rec["qa_id"], answer_text=rec["answer_text"])


def write_predictions(preds: Iterable[Prediction], path: str | Path | IO[str]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for p in preds:
            f.write(json.dumps(prediction_to_record(p), ensure_ascii=False) + "\n")
            n += 1
    return n
