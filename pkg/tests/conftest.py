import json
from pathlib import Path

import pytest

from distilner.corpus import parse_conll

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fixture_path() -> Path:
    return DATA_DIR / "fixture50.conll"


@pytest.fixture(scope="session")
def fixture_bytes(fixture_path) -> bytes:
    return fixture_path.read_bytes()


@pytest.fixture()
def fixture_sentences(fixture_bytes):
    return parse_conll(fixture_bytes, source="conll-train")


@pytest.fixture(scope="session")
def phase2_reference() -> dict:
    return json.loads((DATA_DIR / "phase2_reference.json").read_text())
