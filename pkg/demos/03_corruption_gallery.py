"""Show each corruption strategy on the same dialogue, then the full
composition into an aligned (input, target, loss_mask) sample."""

import random

from dialoforge import CorruptionConfig, Dialogue, Utterance, corrupt, restore, tokenize
from dialoforge.corruption import (
    intra_topic_permute,
    speaker_mask,
    speaker_permute,
    token_infill,
    token_mask,
    utterance_mask,
)

dialogue = Dialogue(
    id="gallery",
    utterances=(
        Utterance("Nurse", "Do you have any headache at night?", topic_id=0),
        Utterance("Patient", "No no headache, just a bit cough..", topic_id=0),
        Utterance("Nurse", "Cough? you mean cough at every night?", topic_id=0),
    ),
)
t = tokenize(dialogue)
VOCAB = ("fever", "walking", "severe", "morning", "water")


def show(title, tokens):
    print(f"\n{title}")
    line = []
    for tok in tokens:
        if tok.surface == "<u>" and line:
            print("   " + " ".join(line))
            line = []
        line.append(tok.surface)
    print("   " + " ".join(line))


show("Original", t.tokens)
show("Token masking (5% of content tokens -> <mask>)",
     token_mask(t, 0.05, random.Random(3))[0])
show("Token infilling (random vocabulary replacements)",
     token_infill(t, 0.10, VOCAB, random.Random(1))[0])
show("Speaker masking (the speaker token only)",
     speaker_mask(t, 2 / 3, random.Random(0))[0])
show("Speaker permutation (swap in a different in-dialogue label)",
     speaker_permute(t, 2 / 3, random.Random(2))[0])
show("Utterance masking (whole span, one mask per content token)",
     utterance_mask(t, 1 / 3, random.Random(0))[0])
show("Intra-topic utterance permutation (same-topic block swap)",
     intra_topic_permute(t, 1 / 3, random.Random(0))[0])

# Full composition: token/speaker edits first, then utterance-level ops.
cfg = CorruptionConfig(infill_vocab=VOCAB, seed=11)
sample = corrupt(t, cfg)
print("\nComposed sample:")
print("  input :", " ".join(sample.input))
print("  target:", " ".join(sample.target))
print("  loss  :", "".join(str(b) for b in sample.loss_mask))
print("  ops   :", [(op.kind, op.start, op.end) for op in sample.ops])
assert restore(sample) == list(sample.target)
print("\nOverlaying each op's original surfaces restores the target exactly.")
