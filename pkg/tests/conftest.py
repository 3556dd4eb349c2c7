from __future__ import annotations

import pytest

from helpers import FIXTURES
from saycomply.embedding import HashedBowEmbedder
from saycomply.llm import scripted_gateway
from saycomply.store import ingest_corpus
from saycomply.worldsim import load_world


@pytest.fixture(scope="session")
def embedder():
    return HashedBowEmbedder()


@pytest.fixture()
def f1_store(embedder):
    return ingest_corpus(FIXTURES / "corpus_f1", embedder)


@pytest.fixture()
def f2_store(embedder):
    return ingest_corpus(FIXTURES / "corpus_f2", embedder)


@pytest.fixture()
def w1_world():
    return load_world(FIXTURES / "world_w1.json")


@pytest.fixture()
def f1_gateway():
    return scripted_gateway(FIXTURES / "rules_f1.json")
