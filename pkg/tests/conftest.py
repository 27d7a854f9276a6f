import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from clara.corpus import Vocabulary, build_vocabulary
from clara.pipeline import TrainSettings, split_corpus, train_bundle
from clara.synth import synth_corpus

settings.register_profile(
    "ci",
    max_examples=60,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def eeg_corpus():
    return synth_corpus(seed=11, n_reports=240, modality="eeg")


@pytest.fixture(scope="session")
def eeg_vocab(eeg_corpus) -> Vocabulary:
    return build_vocabulary(eeg_corpus, min_count=3)


@pytest.fixture(scope="session")
def small_bundle(eeg_corpus):
    # one quick shared bundle; tests that mutate it must copy first
    train, _, _ = split_corpus(eeg_corpus, seed=11)
    return train_bundle(
        train,
        modality="eeg",
        settings=TrainSettings(seed=0, editor_epochs=4, editor_rounds=1,
                               clf_epochs=15, phenotype_epochs=6),
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
