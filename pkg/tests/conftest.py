import numpy as np
import pytest

from planahead.corpus import ExperimentConfig, gen_corpus
from planahead.harness import build_index


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_cfg():
    return ExperimentConfig(L=4, V=16, D=32, m=16, corpus_size=2000, num_queries=30)


@pytest.fixture(scope="session")
def small_corpus(small_cfg):
    return gen_corpus(small_cfg)


@pytest.fixture(scope="session")
def small_index(small_corpus, small_cfg):
    return build_index(small_corpus, small_cfg)
