import pytest

from dialoforge import Dialogue, GenerationConfig, Utterance, generate_corpus


@pytest.fixture
def clinic_dialogue() -> Dialogue:
    """Three-utterance nurse/patient exchange used across the suite."""
    return Dialogue(
        id="clinic-1",
        utterances=(
            Utterance("Nurse", "Do you have any headache at night?", 0),
            Utterance("Patient", "No no headache, just a bit cough..", 0),
            Utterance("Nurse", "Cough? you mean cough at every night?", 0),
        ),
    )


@pytest.fixture(scope="session")
def small_corpus():
    """50 generated (dialogue, truth) pairs with default config, seed 123."""
    return list(generate_corpus(GenerationConfig(), 50, 123))
