"""Span decoding and SQuAD-style scoring on hand-made probability records.

Position 0 of each probability vector is reserved for No-Answer; positions
i >= 1 index dialogue tokens. The decoder takes the maximum product of
p_start and p_end over spans, falling back to No-Answer when the reserved
position wins outright.
"""

from dialoforge import (
    Prediction,
    ProbRecord,
    decode_span,
    normalize_answer,
    score_corpus,
    token_f1,
)
from dialoforge.squad_eval import resolve_answer_text

tokens = ["Yes", ",", "only", "a", "bit", "when", "I", "drink", "water"]

# Confident span: mass on "only"(3) .. "bit"(5) in 1-based positions.
r1 = ProbRecord("q1", (0.01, 0, 0, 0.9, 0.05, 0.04, 0, 0, 0, 0),
                      (0.01, 0, 0, 0.02, 0.07, 0.9, 0, 0, 0, 0))
p1 = resolve_answer_text(decode_span(r1), tokens)
print(f"q1 decoded span {p1.span} -> {p1.answer_text!r}")

# No-Answer: the reserved position dominates.
r2 = ProbRecord("q2", (0.95,) + (0.005,) * 9, (0.95,) + (0.005,) * 9)
p2 = decode_span(r2)
print(f"q2 decoded -> {p2.answer_text!r} (No-Answer)")

print("\nNormalization strips case, punctuation, and articles:")
for s in ("only a bit", "The Headache.", "A bit, only!"):
    print(f"  {s!r} -> {normalize_answer(s)!r}")

print("\nToken F1 on partial overlaps:")
print("  'a bit' vs 'only a bit' ->", round(token_f1("a bit", "only a bit"), 4))

gold = [("q1", "only a bit", "extent"), ("q2", None, "location"), ("q3", "every night", "frequency")]
preds = [p1, p2, Prediction("q3", "at night")]
report = score_corpus(preds, gold)
print("\nCorpus report:", report.to_record())
