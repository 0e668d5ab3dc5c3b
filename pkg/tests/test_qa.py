import pytest

from dialoforge import (
    AttributeKind,
    Dialogue,
    SplitSpec,
    SubsetLadder,
    Utterance,
    build_qa,
    make_splits,
    smart_join,
    subsample_train,
    tokenize,
)
from dialoforge.qa import (
    InsufficientData,
    LadderTooLarge,
    QAError,
    QASample,
    QUESTION_TEMPLATES,
    SpanAlignmentError,
    build_qa_corpus,
    qa_from_record,
    qa_to_record,
)
from dialoforge.synth import Fact, GroundTruth


def _swollen_fixture():
    text = "Yes, only a bit when I drink too much water"
    d = Dialogue("demo", (
        Utterance("Nurse", "Is your left leg still swollen?", 1),
        Utterance("Patient", text, 1),
    ))
    lo = text.index("only a bit")
    gt = GroundTruth(
        dialogue_id="demo",
        facts=(Fact("swollen leg", AttributeKind.EXTENT, "only a bit", 1, (lo, lo + len("only a bit"))),),
        absent=(("swollen leg", AttributeKind.LOCATION),),
    )
    return d, gt


def test_build_qa_positive_and_absent():
    d, gt = _swollen_fixture()
    samples = build_qa(d, gt)
    assert len(samples) == 2
    pos, neg = samples
    assert pos.answer is not None and pos.answer.text == "only a bit"
    assert pos.attribute is AttributeKind.EXTENT
    assert pos.question in {
        t.format(symptom="swollen leg") for t in QUESTION_TEMPLATES[AttributeKind.EXTENT]
    }
    surfaces = tokenize(d).surfaces()
    joined = smart_join(surfaces[pos.answer.start_token : pos.answer.end_token + 1])
    assert joined == "only a bit"
    assert neg.answer is None
    assert neg.attribute is AttributeKind.LOCATION


def test_build_qa_extent_template_matches_paper_wording():
    assert QUESTION_TEMPLATES[AttributeKind.EXTENT][0] == "What is the extent of the {symptom}?"
    assert QUESTION_TEMPLATES[AttributeKind.FREQUENCY][0] == (
        "How frequently did you experience the {symptom}?"
    )


def test_build_qa_rejects_mismatched_truth():
    d, gt = _swollen_fixture()
    other = Dialogue("other", d.utterances)
    with pytest.raises(QAError):
        build_qa(other, gt)


def test_span_alignment_error_on_mid_token_span():
    d, gt = _swollen_fixture()
    bad = GroundTruth(
        dialogue_id="demo",
        facts=(Fact("swollen leg", AttributeKind.EXTENT, "nly a bit", 1, (6, 15)),),
        absent=(),
    )
    with pytest.raises(SpanAlignmentError):
        build_qa(d, bad)


def test_build_qa_deterministic():
    d, gt = _swollen_fixture()
    a = [qa_to_record(s) for s in build_qa(d, gt, seed=4)]
    b = [qa_to_record(s) for s in build_qa(d, gt, seed=4)]
    assert a == b


def test_alignment_property_over_corpus(small_corpus):
    for d, gt in small_corpus:
        surfaces = tokenize(d).surfaces()
        for s in build_qa(d, gt):
            if s.answer is None:
                continue
            joined = smart_join(surfaces[s.answer.start_token : s.answer.end_token + 1])
            assert joined == s.answer.text


def test_qa_ids_unique(small_corpus):
    ids = [s.id for s in build_qa_corpus(small_corpus)]
    assert len(ids) == len(set(ids))


def test_qa_record_roundtrip(small_corpus):
    d, gt = small_corpus[0]
    for s in build_qa(d, gt):
        assert qa_from_record(qa_to_record(s)) == s


# -- splits --

def _toy_samples(n_dialogues=10, per=3):
    out = []
    for i in range(n_dialogues):
        for j in range(per):
            out.append(QASample(
                id=f"d{i}:q{j}", dialogue_id=f"d{i}", question="q?",
                symptom="cough", attribute=AttributeKind.TIME, answer=None,
            ))
    return out


def test_splits_disjoint_and_exact():
    samples = _toy_samples(10, 3)
    spec = SplitSpec(train=6, val=2, test=2, seed=1)
    splits = make_splits(samples, spec)
    assert (len(splits.train), len(splits.val), len(splits.test)) == (6, 2, 2)
    groups = [
        {s.dialogue_id for s in splits.train},
        {s.dialogue_id for s in splits.val},
        {s.dialogue_id for s in splits.test},
    ]
    assert not (groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2])


def test_splits_deterministic():
    samples = _toy_samples(12, 4)
    spec = SplitSpec(train=20, val=8, test=8, seed=9)
    a = make_splits(samples, spec)
    b = make_splits(samples, spec)
    assert a == b
    c = make_splits(samples, SplitSpec(train=20, val=8, test=8, seed=10))
    assert c != a


def test_splits_insufficient_data():
    with pytest.raises(InsufficientData):
        make_splits(_toy_samples(2, 2), SplitSpec(train=6, val=2, test=2, seed=0))


def test_splits_on_generated_corpus(small_corpus):
    samples = list(build_qa_corpus(small_corpus))
    spec = SplitSpec(train=200, val=50, test=50, seed=2)
    splits = make_splits(samples, spec)
    assert (len(splits.train), len(splits.val), len(splits.test)) == (200, 50, 50)
    train_ids = {s.dialogue_id for s in splits.train}
    assert train_ids.isdisjoint({s.dialogue_id for s in splits.val})
    assert train_ids.isdisjoint({s.dialogue_id for s in splits.test})


# -- low-resource ladder --

def test_ladder_nesting():
    samples = _toy_samples(20, 5)  # 100 samples
    ladder = SubsetLadder(sizes=(10, 25, 60))
    subsets = subsample_train(samples, ladder, seed=3)
    assert [len(s) for s in subsets] == [10, 25, 60]
    for small, large in zip(subsets, subsets[1:]):
        assert set(s.id for s in small) <= set(s.id for s in large)
        assert list(small) == list(large[: len(small)])


def test_ladder_default_grid():
    assert SubsetLadder().sizes == (3000, 5000, 10000, 20000, 30000, 40000)


def test_ladder_deterministic():
    samples = _toy_samples(20, 5)
    ladder = SubsetLadder(sizes=(10, 30))
    assert subsample_train(samples, ladder, seed=3) == subsample_train(samples, ladder, seed=3)


def test_ladder_too_large():
    with pytest.raises(LadderTooLarge):
        subsample_train(_toy_samples(2, 2), SubsetLadder(sizes=(10,)), seed=0)


def test_ladder_validation():
    with pytest.raises(QAError):
        SubsetLadder(sizes=(10, 10))
    with pytest.raises(QAError):
        SubsetLadder(sizes=())
