import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

BOLA_QUESTION = "What is Broken Object Level Authorization (BOLA)?"


@pytest.fixture(scope="session")
def bola_triples_raw() -> str:
    """Raw JSON array a model would emit for the BOLA report."""
    return (FIXTURES / "bola_triples.json").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def bola_triples(bola_triples_raw) -> list[dict]:
    return json.loads(bola_triples_raw)


@pytest.fixture(scope="session")
def bola_answer() -> str:
    return (FIXTURES / "bola_answer.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def bola_report() -> str:
    return (FIXTURES / "bola_report.txt").read_text(encoding="utf-8")


@pytest.fixture()
def bola_corpus_dir(tmp_path, bola_report):
    data = tmp_path / "bola_data"
    data.mkdir()
    (data / "api_security_report.txt").write_text(bola_report, encoding="utf-8")
    return data


def bola_mock_script(bola_answer: str, bola_triples_raw: str) -> list[dict]:
    """Mock script answering the RAG prompt and the graph-extract prompt."""
    return [
        {"match": "Return ONLY a JSON array", "response": bola_triples_raw},
        {"match": "Question:", "response": bola_answer},
    ]
