"""Bundled demo corpus, synthetic dataset and recorded backend responses."""

from pathlib import Path

_HERE = Path(__file__).resolve().parent


def corpus_dir() -> Path:
    return _HERE / "corpus"


def fixture_responses_dir() -> Path:
    return _HERE / "responses"


def jacobs_csv() -> Path:
    return _HERE / "jacobs_synthetic.csv"
