"""Canonical data model for multi-party dialogues.

Defines speaker-tagged utterances, the whitespace + punctuation-detaching
tokenizer that every downstream stage shares, and bit-exact JSONL corpus I/O.
Utterances serialize to token streams of the form ``<u> {speaker}: w1 w2 ...``
so that speaker manipulations are single-token substitutions and utterance
boundaries are explicit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator

BOUNDARY_SURFACE = "<u>"
MASK_SURFACE = "<mask>"
NO_ANSWER_SURFACE = "<no_answer>"

# Sentinels may never occur in raw source text; ingestion rejects them.
SENTINEL_SURFACES = (BOUNDARY_SURFACE, MASK_SURFACE)

# Punctuation detached from word edges into standalone tokens.
DETACHED_PUNCT = ".,?!;"


class DialogueError(ValueError):
    """Base class for dialogue-core validation and I/O errors."""


class EmptyUtterance(DialogueError):
    pass


class MalformedStream(DialogueError):
    pass


class ParseError(DialogueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateId(DialogueError):
    pass


class TokenKind(str, Enum):
    CONTENT = "content"
    SPEAKER = "speaker"
    BOUNDARY = "boundary"
    MASK = "mask"
    NO_ANSWER = "no_answer"


def _validate_speaker(label: str) -> None:
    if not label:
        raise DialogueError("speaker label must be non-empty")
    if any(c.isspace() for c in label):
        raise DialogueError(f"speaker label contains whitespace: {label!r}")
    if ":" in label:
        raise DialogueError(f"speaker label contains ':': {label!r}")


@dataclass(frozen=True)
class Utterance:
    speaker: str
    text: str
    topic_id: int = 0

    def __post_init__(self):
        _validate_speaker(self.speaker)
        if not self.text.strip():
            raise DialogueError("utterance text is empty")
        if self.topic_id < 0:
            raise DialogueError(f"topic_id must be non-negative, got {self.topic_id}")
        for sentinel in SENTINEL_SURFACES:
            if sentinel in self.text:
                raise DialogueError(f"utterance text contains reserved sentinel {sentinel!r}")


@dataclass(frozen=True)
class Dialogue:
    id: str
    utterances: tuple[Utterance, ...]
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise DialogueError("dialogue id must be non-empty")
        if not isinstance(self.utterances, tuple):
            object.__setattr__(self, "utterances", tuple(self.utterances))
        if not self.utterances:
            raise DialogueError(f"dialogue {self.id!r} has no utterances")

    @property
    def speaker_set(self) -> frozenset[str]:
        return frozenset(u.speaker for u in self.utterances)


@dataclass(frozen=True)
class Token:
    surface: str
    kind: TokenKind
    utt_index: int
    pos_in_utt: int


@dataclass(frozen=True)
class TokenizedDialogue:
    dialogue_id: str
    tokens: tuple[Token, ...]
    # Carried alongside the stream so detokenize can rebuild the full
    # Dialogue (topic grouping drives the intra-topic corruption pass).
    topic_ids: tuple[int, ...] = ()
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def num_utterances(self) -> int:
        return sum(1 for t in self.tokens if t.kind is TokenKind.BOUNDARY)

    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


def content_tokens_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Split text into content tokens with (start, end) character offsets.

    Whitespace-delimited chunks are split further: leading and trailing
    punctuation characters (``.,?!;``) each become their own token, e.g.
    ``"night?"`` -> ``night`` + ``?`` and ``"cough.."`` -> ``cough`` + ``.`` + ``.``.
    """
    out: list[tuple[str, int, int]] = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        # chunk is text[i:j]
        lo, hi = i, j
        while lo < hi and text[lo] in DETACHED_PUNCT:
            out.append((text[lo], lo, lo + 1))
            lo += 1
        trailing: list[tuple[str, int, int]] = []
        while hi > lo and text[hi - 1] in DETACHED_PUNCT:
            trailing.append((text[hi - 1], hi - 1, hi))
            hi -= 1
        if hi > lo:
            out.append((text[lo:hi], lo, hi))
        out.extend(reversed(trailing))
        i = j
    return out


def smart_join(surfaces: Iterable[str]) -> str:
    """Join token surfaces with spaces, re-attaching detached punctuation.

    Inverse of the punctuation split up to whitespace normalization:
    ``["night", "?"]`` -> ``"night?"``.
    """
    out: list[str] = []
    for s in surfaces:
        if out and len(s) == 1 and s in DETACHED_PUNCT:
            out[-1] += s
        else:
            out.append(s)
    return " ".join(out)


def speaker_token_surface(label: str) -> str:
    return f"{label}:"


def tokenize(d: Dialogue) -> TokenizedDialogue:
    """Serialize a dialogue as ``<u> {speaker}: w1 w2 ...`` per utterance."""
    tokens: list[Token] = []
    for idx, utt in enumerate(d.utterances):
        pos = 0
        tokens.append(Token(BOUNDARY_SURFACE, TokenKind.BOUNDARY, idx, pos))
        pos += 1
        tokens.append(Token(speaker_token_surface(utt.speaker), TokenKind.SPEAKER, idx, pos))
        pos += 1
        content = content_tokens_with_spans(utt.text)
        if not content:
            raise EmptyUtterance(f"utterance {idx} of dialogue {d.id!r} has no content tokens")
        for surface, _, _ in content:
            tokens.append(Token(surface, TokenKind.CONTENT, idx, pos))
            pos += 1
    return TokenizedDialogue(
        dialogue_id=d.id,
        tokens=tuple(tokens),
        topic_ids=tuple(u.topic_id for u in d.utterances),
        meta=dict(d.meta),
    )


def detokenize(t: TokenizedDialogue) -> Dialogue:
    """Rebuild a Dialogue from a well-formed token stream.

    Raises MalformedStream when the ``boundary, speaker, content+`` structure
    is violated (including corrupted streams containing mask tokens).
    """
    utterances: list[Utterance] = []
    toks = list(t.tokens)
    i = 0
    utt_index = 0
    while i < len(toks):
        if toks[i].kind is not TokenKind.BOUNDARY:
            raise MalformedStream(f"expected boundary token at position {i}, got {toks[i].surface!r}")
        i += 1
        if i >= len(toks) or toks[i].kind is not TokenKind.SPEAKER:
            raise MalformedStream(f"expected speaker token after boundary at position {i}")
        speaker_surface = toks[i].surface
        if not speaker_surface.endswith(":"):
            raise MalformedStream(f"speaker token {speaker_surface!r} does not end with ':'")
        speaker = speaker_surface[:-1]
        i += 1
        contents: list[str] = []
        while i < len(toks) and toks[i].kind is TokenKind.CONTENT:
            contents.append(toks[i].surface)
            i += 1
        if not contents:
            raise MalformedStream(f"utterance {utt_index} has no content tokens")
        if i < len(toks) and toks[i].kind is not TokenKind.BOUNDARY:
            raise MalformedStream(f"unexpected {toks[i].kind.value} token at position {i}")
        topic_id = t.topic_ids[utt_index] if utt_index < len(t.topic_ids) else 0
        utterances.append(Utterance(speaker=speaker, text=smart_join(contents), topic_id=topic_id))
        utt_index += 1
    if len(t.topic_ids) not in (0, utt_index):
        raise MalformedStream(
            f"topic_ids length {len(t.topic_ids)} does not match {utt_index} utterances"
        )
    return Dialogue(id=t.dialogue_id, utterances=tuple(utterances), meta=dict(t.meta))


def canonicalize(d: Dialogue) -> Dialogue:
    """Normalize utterance texts to the tokenizer's canonical spacing.

    ``detokenize(tokenize(d)) == canonicalize(d)`` for every valid dialogue.
    """
    utts = tuple(
        Utterance(
            speaker=u.speaker,
            text=smart_join(s for s, _, _ in content_tokens_with_spans(u.text)),
            topic_id=u.topic_id,
        )
        for u in d.utterances
    )
    return Dialogue(id=d.id, utterances=utts, meta=dict(d.meta))


# -- corpus JSONL --

def dialogue_to_record(d: Dialogue) -> dict:
    return {
        "id": d.id,
        "utterances": [
            {"speaker": u.speaker, "text": u.text, "topic_id": u.topic_id}
            for u in d.utterances
        ],
        "meta": dict(d.meta),
    }


def dialogue_from_record(rec: dict) -> Dialogue:
    try:
        utts = tuple(
            Utterance(speaker=u["speaker"], text=u["text"], topic_id=int(u["topic_id"]))
            for u in rec["utterances"]
        )
        meta = {str(k): str(v) for k, v in rec.get("meta", {}).items()}
        return Dialogue(id=rec["id"], utterances=utts, meta=meta)
    except (KeyError, TypeError) as e:
        raise DialogueError(f"bad dialogue record: {e}") from e


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, ensure_ascii=False)


def read_corpus(path: str | Path) -> Iterator[Dialogue]:
    """Stream dialogues from a JSONL file, one object per line.

    Raises ParseError with the 1-based line number on malformed lines and
    DuplicateId when an id repeats within the file.
    """
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                d = dialogue_from_record(rec)
            except DuplicateId:
                raise
            except Exception as e:
                raise ParseError(str(e), lineno) from e
            if d.id in seen:
                raise DuplicateId(f"duplicate dialogue id {d.id!r} at line {lineno}")
            seen.add(d.id)
            yield d


def write_corpus(dialogues: Iterable[Dialogue], path: str | Path | IO[str]) -> int:
    """Write dialogues as canonical JSONL (UTF-8, LF). Returns the count."""
    n = 0
    if hasattr(path, "write"):
        for d in dialogues:
            path.write(dumps_record(dialogue_to_record(d)) + "\n")
            n += 1
        return n
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for d in dialogues:
            f.write(dumps_record(dialogue_to_record(d)) + "\n")
            n += 1
    return n
