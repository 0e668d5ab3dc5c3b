"""dialoforge: dialogue pre-training data engineering toolkit.

Pipeline stages: generate synthetic clinical inquiry-answering conversations,
corrupt them into aligned reconstruction samples, build extractive QA
datasets, and score span predictions SQuAD-style.
"""

from .dialogue import (
    Dialogue,
    DialogueError,
    Token,
    TokenKind,
    TokenizedDialogue,
    Utterance,
    canonicalize,
    detokenize,
    read_corpus,
    smart_join,
    tokenize,
    write_corpus,
)
from .corruption import (
    CorruptionConfig,
    OpRecord,
    PretrainSample,
    corrupt,
    corrupt_corpus,
    restore,
    select_units,
)
from .qa import QASample, SplitSpec, SubsetLadder, build_qa, make_splits, subsample_train
from .seeding import stable_seed
from .squad_eval import (
    Prediction,
    ProbRecord,
    ScoreReport,
    decode_span,
    exact_match,
    normalize_answer,
    score_corpus,
    token_f1,
)
from .synth import (
    AttributeKind,
    GenerationConfig,
    GroundTruth,
    SymptomTopic,
    TopicRegistry,
    corpus_stats,
    generate_corpus,
    generate_dialogue,
    load_topic_registry,
)

__version__ = "0.1.0"
