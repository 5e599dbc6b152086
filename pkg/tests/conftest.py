import numpy as np
import pytest

from resketch.data import build_vocabulary
from resketch.generator import GenConfig, generate_corpus
from resketch.neural import TrainConfig
from resketch.retrieval import build_index


@pytest.fixture(scope="session")
def toy_corpus():
    return generate_corpus(GenConfig(seed=3, family_count=6,
                                     samples_per_family=24,
                                     test_cases_per_sample=3))


@pytest.fixture(scope="session")
def toy_vocab(toy_corpus):
    return build_vocabulary(toy_corpus)


@pytest.fixture(scope="session")
def toy_index(toy_corpus):
    return build_index(toy_corpus, ("train",))


@pytest.fixture(scope="session")
def tiny_train_config():
    return TrainConfig(d=32, heads=4, max_nl_len=24, max_code_len=48,
                       batch_size=8, epochs=3, seed=9)


@pytest.fixture(scope="session")
def micro_vocab():
    from resketch.data import Vocabulary
    return Vocabulary(["def", "f", "(", ")", ":", "return", "x", "y", "a",
                       "b", "c", "1", "2", "3", "+", "-", "=", "count",
                       "items", "<ind>", "<ded>"])


@pytest.fixture(scope="session")
def micro_config():
    return TrainConfig(d=16, heads=2, max_nl_len=8, max_code_len=12,
                       batch_size=4, epochs=2, seed=13)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
