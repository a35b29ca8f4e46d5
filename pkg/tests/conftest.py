from __future__ import annotations

import random

import pytest

from apofasis.corpus import CorpusLayout
from apofasis.testing import build_synthetic_corpus, random_ada, synthetic_record


@pytest.fixture
def small_corpus(tmp_path) -> CorpusLayout:
    return build_synthetic_corpus(tmp_path / "corpus", 12, seed=3, n_orgs=3)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240817)


@pytest.fixture
def make_record():
    def factory(ada: str | None = None, **kwargs):
        if ada is None:
            ada = random_ada(random.Random(hash(frozenset(kwargs.items())) & 0xFFFF))
        return synthetic_record(ada, **kwargs)

    return factory
