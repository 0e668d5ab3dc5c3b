"""Template-driven generator of nurse-patient symptom checking dialogues.

Each dialogue opens with a greeting exchange, walks through a sampled set of
symptom topics as inquiry/answer blocks, and closes with a sign-off. Every
entity the patient states is recorded in a GroundTruth sidecar with its exact
character span, and supported-but-unmentioned (symptom, attribute) pairs are
recorded as absent so the QA builder can emit No-Answer samples.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Iterator

from .dialogue import Dialogue, Utterance, TokenizedDialogue, TokenKind, tokenize
from .seeding import stable_seed

NURSE = "Nurse"
PATIENT = "Patient"


class SynthError(ValueError):
    pass


class ConfigError(SynthError):
    pass


class EmptyCorpus(SynthError):
    pass


class AttributeKind(str, Enum):
    TIME = "time"
    ACTIVITIES = "activities"
    EXTENT = "extent"
    FREQUENCY = "frequency"
    LOCATION = "location"


@dataclass(frozen=True)
class InquiryTemplate:
    attribute: AttributeKind
    text: str


@dataclass(frozen=True)
class SymptomTopic:
    name: str
    inquiry_templates: tuple[InquiryTemplate, ...]
    attribute_lexicons: dict[AttributeKind, tuple[str, ...]]
    tier: str = "core"

    def __post_init__(self):
        if not self.name:
            raise ConfigError("topic name must be non-empty")
        if not self.inquiry_templates:
            raise ConfigError(f"topic {self.name!r} has no inquiry templates")
        supported = self.supported_attributes
        for tpl in self.inquiry_templates:
            if tpl.attribute not in supported:
                raise ConfigError(
                    f"topic {self.name!r} has a template for unsupported attribute {tpl.attribute.value!r}"
                )
        for attr in supported:
            if not any(t.attribute is attr for t in self.inquiry_templates):
                raise ConfigError(
                    f"topic {self.name!r} supports {attr.value!r} but has no template for it"
                )

    @property
    def supported_attributes(self) -> tuple[AttributeKind, ...]:
        return tuple(a for a in AttributeKind if self.attribute_lexicons.get(a))

    def templates_for(self, attr: AttributeKind) -> list[InquiryTemplate]:
        return [t for t in self.inquiry_templates if t.attribute is attr]


@dataclass(frozen=True)
class TopicRegistry:
    topics: tuple[SymptomTopic, ...]

    def __post_init__(self):
        names = [t.name for t in self.topics]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate topic names in registry")

    @staticmethod
    def from_record(rec: dict) -> "TopicRegistry":
        topics = []
        for t in rec["topics"]:
            templates = tuple(
                InquiryTemplate(AttributeKind(tpl["attribute"]), tpl["text"])
                for tpl in t["templates"]
            )
            lexicons = {
                AttributeKind(k): tuple(v) for k, v in t["lexicons"].items()
            }
            topics.append(
                SymptomTopic(
                    name=t["name"],
                    inquiry_templates=templates,
                    attribute_lexicons=lexicons,
                    tier=t.get("tier", "core"),
                )
            )
        return TopicRegistry(topics=tuple(topics))

    def to_record(self) -> dict:
        return {
            "topics": [
                {
                    "name": t.name,
                    "tier": t.tier,
                    "templates": [
                        {"attribute": tpl.attribute.value, "text": tpl.text}
                        for tpl in t.inquiry_templates
                    ],
                    "lexicons": {
                        a.value: list(v) for a, v in t.attribute_lexicons.items()
                    },
                }
                for t in self.topics
            ]
        }


def load_topic_registry(path: str | Path | None = None) -> TopicRegistry:
    """Load a topic registry JSON file, or the bundled default registry."""
    if path is None:
        data = resources.files("dialoforge").joinpath("data/default_topics.json").read_text("utf-8")
    else:
        data = Path(path).read_text("utf-8")
    return TopicRegistry.from_record(json.loads(data))


@dataclass(frozen=True)
class GenerationConfig:
    # defaults tuned against the published corpus averages
    # (~15.5 turns and ~255 words per dialogue)
    topics_per_dialogue: tuple[int, int] = (2, 3)
    turns_per_topic: tuple[int, int] = (4, 6)
    disfluency_rate: float = 0.3
    no_mention_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for name in ("topics_per_dialogue", "turns_per_topic"):
            lo, hi = getattr(self, name)
            if not (1 <= lo <= hi):
                raise ConfigError(f"{name} range ({lo}, {hi}) is empty or non-positive")
        for name in ("disfluency_rate", "no_mention_rate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class Fact:
    symptom: str
    attribute: AttributeKind
    entity: str
    utt_index: int
    char_span: tuple[int, int]


@dataclass(frozen=True)
class GroundTruth:
    dialogue_id: str
    facts: tuple[Fact, ...]
    absent: tuple[tuple[str, AttributeKind], ...]


# Answer templates; {entity} is the span recorded in GroundTruth. None of
# them places the entity at the very start or end of the utterance, so
# disfluency edits never touch the span.
ANSWER_TEMPLATES: dict[AttributeKind, list[str]] = {
    AttributeKind.TIME: [
        "It started {entity}, I think.",
        "I would say it started {entity}, more or less.",
        "Started {entity}, if I remember right.",
    ],
    AttributeKind.ACTIVITIES: [
        "Mostly {entity}, that is when it comes.",
        "I notice it {entity}, usually.",
        "It gets worse {entity}, I think.",
    ],
    AttributeKind.EXTENT: [
        "I would say {entity}, to be honest.",
        "It is {entity} these days.",
        "Probably {entity}, something like that.",
    ],
    AttributeKind.FREQUENCY: [
        "It happens {entity}, more or less.",
        "I get it {entity}, I would say.",
        "Maybe {entity}, something like that.",
    ],
    AttributeKind.LOCATION: [
        "It is {entity} mostly.",
        "Right {entity}, that is where I feel it.",
        "I feel it {entity}, most of the time.",
    ],
}

# Evasive answers for attributes the patient never pins down; they must not
# contain any lexicon entity verbatim.
DODGE_TEMPLATES: dict[AttributeKind, list[str]] = {
    AttributeKind.TIME: [
        "Honestly I cannot remember when it started, it sneaked up on me.",
        "Hard to say when that began, I did not keep track of the days.",
    ],
    AttributeKind.ACTIVITIES: [
        "No idea really, it just comes and goes as it pleases.",
        "I have not noticed any pattern with it, to be honest.",
    ],
    AttributeKind.EXTENT: [
        "I cannot really describe how bad it is, it varies so much.",
        "Difficult to put a number on that, you know how it is.",
    ],
    AttributeKind.FREQUENCY: [
        "I really could not say how often, I stopped counting.",
        "I have not been keeping count of that, to be honest.",
    ],
    AttributeKind.LOCATION: [
        "It is difficult to say where exactly, it moves around.",
        "I cannot quite pin down the spot, it is all rather vague.",
    ],
}

GREETINGS_NURSE = [
    "Hello, good morning, this is the nurse calling from the clinic; I would like to check on you after your discharge, is now a good time to talk?",
    "Hi, it is the community nurse here; you were discharged recently and I have a few follow-up questions for you, if that is alright with you.",
    "Good afternoon, nurse here from the follow-up team; I am calling to see how you have been doing since you went home from the ward.",
]

GREETINGS_PATIENT = [
    "Oh hello, yes, now is fine; I think I am doing okay, a little tired maybe.",
    "Hi, yes, sure, go ahead; I have been managing at home, more or less.",
    "Hello, okay, yes we can talk now; things have been so so, to be honest.",
]

TOPIC_LEADINS = [
    "Now, about the {symptom}.",
    "Let us talk about the {symptom} next.",
    "I also want to ask you about the {symptom}.",
    "Moving on to the {symptom} then.",
]

ACKNOWLEDGMENTS = [
    "I see, thank you, let me note that down for the doctor.",
    "Alright, that is helpful to know, I will put it in your record.",
    "Okay, noted, we will keep an eye on that one together.",
]

CLOSINGS_NURSE = [
    "Alright, that is all the questions I have for today; thank you for your time, and please call us if anything gets worse.",
    "Okay, we are done for today; take your medications on time, and do reach out to us if you feel anything unusual.",
    "That is everything from me; rest well, keep monitoring how you feel, and we will speak again next week as planned.",
]

CLOSINGS_PATIENT = [
    "Okay, thank you for checking in on me, bye bye.",
    "Alright, thanks a lot, I will do that, goodbye.",
    "Thank you, you take care too, bye.",
]

FILLERS = ["Uh,", "Hmm,", "Well,", "You know,", "Erm,"]


@dataclass
class _Draft:
    """An utterance under construction: concatenated segments, where at most
    one segment is an entity span to be located after assembly."""

    speaker: str
    topic_id: int
    segments: list[tuple[str, Fact | None]]

    def disfluency(self, rng: random.Random) -> None:
        kind = rng.choice(["filler", "repeat", "trail"])
        if kind == "filler":
            self.segments.insert(0, (rng.choice(FILLERS) + " ", None))
        elif kind == "repeat":
            first, fact = self.segments[0]
            word = first.split(" ", 1)[0].rstrip(".,?!;")
            if word:
                self.segments.insert(0, (word + " ", None))
        else:
            last, fact = self.segments[-1]
            self.segments[-1] = (last.rstrip("."), fact)
            self.segments.append((" ...", None))

    def render(self, utt_index: int) -> tuple[Utterance, list[Fact]]:
        text = ""
        facts = []
        for piece, fact in self.segments:
            if fact is not None:
                span = (len(text), len(text) + len(piece))
                facts.append(
                    Fact(fact.symptom, fact.attribute, piece, utt_index, span)
                )
            text += piece
        return Utterance(self.speaker, text, self.topic_id), facts


def _answer_draft(
    topic: SymptomTopic, attr: AttributeKind, topic_id: int, rng: random.Random,
    no_mention_rate: float,
) -> tuple[_Draft, str | None]:
    """Patient answer; returns the draft and the stated entity (None = dodge)."""
    if rng.random() < no_mention_rate:
        text = rng.choice(DODGE_TEMPLATES[attr])
        return _Draft(PATIENT, topic_id, [(text, None)]), None
    entity = rng.choice(topic.attribute_lexicons[attr])
    template = rng.choice(ANSWER_TEMPLATES[attr])
    before, after = template.split("{entity}")
    marker = Fact(topic.name, attr, entity, -1, (0, 0))
    return _Draft(PATIENT, topic_id, [(before, None), (entity, marker), (after, None)]), entity


def generate_dialogue(
    cfg: GenerationConfig,
    seed: int,
    registry: TopicRegistry | None = None,
) -> tuple[Dialogue, GroundTruth]:
    """Generate one dialogue plus its ground truth; pure in (cfg, seed)."""
    if registry is None:
        registry = load_topic_registry()
    if not registry.topics:
        raise ConfigError("topic registry is empty")
    if cfg.topics_per_dialogue[1] > len(registry.topics):
        raise ConfigError(
            f"topics_per_dialogue max {cfg.topics_per_dialogue[1]} exceeds "
            f"registry size {len(registry.topics)}"
        )
    rng = random.Random(seed)
    n_topics = rng.randint(*cfg.topics_per_dialogue)
    topics = rng.sample(list(registry.topics), n_topics)

    drafts: list[_Draft] = []
    covered: list[tuple[SymptomTopic, AttributeKind, bool]] = []  # (topic, attr, mentioned)

    drafts.append(_Draft(NURSE, 0, [(rng.choice(GREETINGS_NURSE), None)]))
    drafts.append(_Draft(PATIENT, 0, [(rng.choice(GREETINGS_PATIENT), None)]))

    for k, topic in enumerate(topics):
        topic_id = k + 1
        n_utts = rng.randint(*cfg.turns_per_topic)
        supported = list(topic.supported_attributes)
        n_pairs = max(1, min(n_utts // 2, len(supported)))
        attrs = rng.sample(supported, n_pairs)
        for j, attr in enumerate(attrs):
            question = rng.choice(topic.templates_for(attr)).text.format(symptom=topic.name)
            if j == 0:
                leadin = rng.choice(TOPIC_LEADINS).format(symptom=topic.name)
                question = leadin + " " + question
            drafts.append(_Draft(NURSE, topic_id, [(question, None)]))
            answer, entity = _answer_draft(topic, attr, topic_id, rng, cfg.no_mention_rate)
            drafts.append(answer)
            covered.append((topic, attr, entity is not None))
        if n_utts % 2 == 1:
            drafts.append(_Draft(NURSE, topic_id, [(rng.choice(ACKNOWLEDGMENTS), None)]))

    closing_id = n_topics + 1
    drafts.append(_Draft(NURSE, closing_id, [(rng.choice(CLOSINGS_NURSE), None)]))
    drafts.append(_Draft(PATIENT, closing_id, [(rng.choice(CLOSINGS_PATIENT), None)]))

    for draft in drafts:
        if draft.speaker == PATIENT and rng.random() < cfg.disfluency_rate:
            draft.disfluency(rng)

    utterances: list[Utterance] = []
    facts: list[Fact] = []
    for i, draft in enumerate(drafts):
        utt, utt_facts = draft.render(i)
        utterances.append(utt)
        facts.extend(utt_facts)

    dialogue_id = f"dlg-{seed & 0xFFFFFFFFFFFFFFFF:016x}"
    dialogue = Dialogue(
        id=dialogue_id,
        utterances=tuple(utterances),
        meta={"symptoms": ",".join(t.name for t in topics)},
    )

    # An attribute counts as absent only when no lexicon entity for the pair
    # occurs anywhere in the dialogue text (entities are generic phrases and
    # can leak in from another topic's answers).
    full_text = "\n".join(u.text for u in utterances)
    stated = {(f.symptom, f.attribute) for f in facts}
    absent: list[tuple[str, AttributeKind]] = []
    for topic in topics:
        for attr in topic.supported_attributes:
            if (topic.name, attr) in stated:
                continue
            if any(e in full_text for e in topic.attribute_lexicons[attr]):
                continue
            absent.append((topic.name, attr))

    truth = GroundTruth(dialogue_id=dialogue_id, facts=tuple(facts), absent=tuple(absent))
    return dialogue, truth


def generate_corpus(
    cfg: GenerationConfig,
    n: int,
    master_seed: int,
    registry: TopicRegistry | None = None,
) -> Iterator[tuple[Dialogue, GroundTruth]]:
    """Generate n dialogues; record i uses seed = stable_seed(master_seed, i),
    so shards produced in parallel agree with a serial run."""
    if n < 0:
        raise ConfigError(f"corpus size must be >= 0, got {n}")
    if registry is None:
        registry = load_topic_registry()
    for i in range(n):
        yield generate_dialogue(cfg, stable_seed(master_seed, i), registry)


# -- corpus statistics --

@dataclass(frozen=True)
class CorpusStats:
    n_dialogues: int
    mean_words: float
    mean_turns: float
    topic_histogram: dict[str, int]
    speaker_histogram: dict[str, int]

    def to_record(self) -> dict:
        return {
            "n_dialogues": self.n_dialogues,
            "mean_words": self.mean_words,
            "mean_turns": self.mean_turns,
            "topic_histogram": dict(sorted(self.topic_histogram.items())),
            "speaker_histogram": dict(sorted(self.speaker_histogram.items())),
        }


def _round2(x: Fraction) -> float:
    # Half-up at the second decimal, computed exactly before conversion.
    return float((x * 100 + Fraction(1, 2)).__floor__()) / 100


def corpus_stats(dialogues: Iterable[Dialogue]) -> CorpusStats:
    """Mean content tokens and turns per dialogue, plus topic/speaker counts."""
    n = 0
    total_words = 0
    total_turns = 0
    topic_hist: dict[str, int] = {}
    speaker_hist: dict[str, int] = {}
    for d in dialogues:
        n += 1
        total_turns += len(d.utterances)
        t = tokenize(d)
        total_words += sum(1 for tok in t.tokens if tok.kind is TokenKind.CONTENT)
        for name in filter(None, d.meta.get("symptoms", "").split(",")):
            topic_hist[name] = topic_hist.get(name, 0) + 1
        for u in d.utterances:
            speaker_hist[u.speaker] = speaker_hist.get(u.speaker, 0) + 1
    if n == 0:
        raise EmptyCorpus("corpus_stats requires a non-empty corpus")
    return CorpusStats(
        n_dialogues=n,
        mean_words=_round2(Fraction(total_words, n)),
        mean_turns=_round2(Fraction(total_turns, n)),
        topic_histogram=topic_hist,
        speaker_histogram=speaker_hist,
    )


# -- ground truth JSONL --

def truth_to_record(gt: GroundTruth) -> dict:
    return {
        "dialogue_id": gt.dialogue_id,
        "facts": [
            {
                "symptom": f.symptom,
                "attribute": f.attribute.value,
                "entity": f.entity,
                "utt_index": f.utt_index,
                "char_start": f.char_span[0],
                "char_end": f.char_span[1],
            }
            for f in gt.facts
        ],
        "absent": [
            {"symptom": s, "attribute": a.value} for s, a in gt.absent
        ],
    }


def truth_from_record(rec: dict) -> GroundTruth:
    facts = tuple(
        Fact(
            symptom=f["symptom"],
            attribute=AttributeKind(f["attribute"]),
            entity=f["entity"],
            utt_index=f["utt_index"],
            char_span=(f["char_start"], f["char_end"]),
        )
        for f in rec["facts"]
    )
    absent = tuple((a["symptom"], AttributeKind(a["attribute"])) for a in rec["absent"])
    return GroundTruth(dialogue_id=rec["dialogue_id"], facts=facts, absent=absent)


def write_truths(truths: Iterable[GroundTruth], path: str | Path | IO[str]) -> int:
    n = 0
    if hasattr(path, "write"):
        for gt in truths:
            path.write(json.dumps(truth_to_record(gt), ensure_ascii=False) + "\n")
            n += 1
        return n
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for gt in truths:
            f.write(json.dumps(truth_to_record(gt), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_truths(path: str | Path) -> Iterator[GroundTruth]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield truth_from_record(json.loads(line))
