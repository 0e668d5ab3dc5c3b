"""Walk through the dialogue data model: tokenize a nurse/patient exchange,
inspect the token stream, and round-trip it back to utterances."""

from dialoforge import Dialogue, Utterance, canonicalize, detokenize, tokenize

dialogue = Dialogue(
    id="demo-1",
    utterances=(
        Utterance("Nurse", "Do you have any headache at night?", topic_id=0),
        Utterance("Patient", "No no headache, just a bit cough..", topic_id=0),
        Utterance("Nurse", "Cough? you mean cough at every night?", topic_id=0),
    ),
)

t = tokenize(dialogue)
print("Serialized token stream (one line per utterance):")
line = []
for tok in t.tokens:
    if tok.surface == "<u>" and line:
        print("  " + " ".join(line))
        line = []
    line.append(tok.surface)
print("  " + " ".join(line))

print()
print(f"{len(t.tokens)} tokens:",
      f"{sum(1 for x in t.tokens if x.kind.value == 'content')} content,",
      f"{sum(1 for x in t.tokens if x.kind.value == 'speaker')} speaker,",
      f"{sum(1 for x in t.tokens if x.kind.value == 'boundary')} boundary")

# Punctuation is detached into standalone tokens ("night?" -> night ?), and
# detokenize re-attaches it, so the round trip lands on the canonical form.
back = detokenize(t)
assert back == canonicalize(dialogue)
print("\nRound trip reproduces the canonical dialogue:")
for u in back.utterances:
    print(f"  {u.speaker}: {u.text}")
