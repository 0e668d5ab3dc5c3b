"""Generate a small synthetic symptom-checking corpus and read its vitals:
per-dialogue ground truth spans, corpus statistics, and determinism."""

from dialoforge import GenerationConfig, corpus_stats, generate_corpus, generate_dialogue

cfg = GenerationConfig()  # defaults tuned for ~15.5 turns / ~255 words

dialogue, truth = generate_dialogue(cfg, seed=42)
print(f"One dialogue ({len(dialogue.utterances)} turns, topics: {dialogue.meta['symptoms']}):\n")
for i, u in enumerate(dialogue.utterances):
    print(f"  [{u.topic_id}] {u.speaker}: {u.text}")

print("\nGround-truth facts (entity spans are exact character slices):")
for f in truth.facts:
    utt = dialogue.utterances[f.utt_index]
    lo, hi = f.char_span
    assert utt.text[lo:hi] == f.entity
    print(f"  {f.symptom}/{f.attribute.value}: {f.entity!r} @ utterance {f.utt_index}")

print("\nAbsent pairs (these become No-Answer questions):")
for symptom, attr in truth.absent:
    print(f"  {symptom}/{attr.value}")

pairs = list(generate_corpus(cfg, 200, master_seed=7))
stats = corpus_stats(d for d, _ in pairs)
print(f"\n200-dialogue corpus: mean_turns={stats.mean_turns}, mean_words={stats.mean_words}")
print("topic histogram:", dict(sorted(stats.topic_histogram.items())))

again = list(generate_corpus(cfg, 200, master_seed=7))
assert [d.id for d, _ in pairs] == [d.id for d, _ in again]
print("\nSame master seed regenerates the identical corpus.")
