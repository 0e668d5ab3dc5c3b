"""Build extractive QA samples from a generated dialogue: positive samples
with token spans, No-Answer negatives, splits, and the low-resource ladder."""

from dialoforge import (
    GenerationConfig,
    SplitSpec,
    SubsetLadder,
    build_qa,
    generate_corpus,
    make_splits,
    smart_join,
    subsample_train,
    tokenize,
)

pairs = list(generate_corpus(GenerationConfig(), 100, master_seed=5))

d, gt = pairs[0]
samples = build_qa(d, gt, seed=5)
surfaces = tokenize(d).surfaces()
print(f"Dialogue {d.id}: {len(samples)} QA samples\n")
for s in samples:
    if s.answer:
        span = f"tokens [{s.answer.start_token}..{s.answer.end_token}]"
        joined = smart_join(surfaces[s.answer.start_token : s.answer.end_token + 1])
        assert joined == s.answer.text
        print(f"  Q: {s.question}")
        print(f"  A: {s.answer.text!r}  ({span})")
    else:
        print(f"  Q: {s.question}")
        print("  A: No Answer")

corpus_samples = [s for d, gt in pairs for s in build_qa(d, gt, seed=5)]
print(f"\nCorpus yields {len(corpus_samples)} samples "
      f"({sum(1 for s in corpus_samples if s.answer is None)} No-Answer).")

splits = make_splits(corpus_samples, SplitSpec(train=500, val=100, test=100, seed=5))
train_ids = {s.dialogue_id for s in splits.train}
assert train_ids.isdisjoint({s.dialogue_id for s in splits.val})
print(f"Splits: {len(splits.train)}/{len(splits.val)}/{len(splits.test)}, dialogue-disjoint.")

ladder = subsample_train(splits.train, SubsetLadder(sizes=(50, 150, 400)), seed=5)
assert all(set(s.id for s in a) <= set(s.id for s in b) for a, b in zip(ladder, ladder[1:]))
print("Low-resource ladder sizes:", [len(x) for x in ladder], "(nested prefixes)")
