"""Shared fixtures: the 10-book corpus used by the pipeline's own tests and
one tiny reference encoder built once per session."""

from pathlib import Path

import pytest

from semb_exporter import create_reference_model

PIPELINE_ROOT = Path(__file__).resolve().parents[2]
SHARED_BOOKS = PIPELINE_ROOT / "tests" / "data" / "children_books.jsonl"


@pytest.fixture(scope="session")
def books_fixture() -> Path:
    assert SHARED_BOOKS.exists(), f"shared corpus fixture missing: {SHARED_BOOKS}"
    return SHARED_BOOKS


@pytest.fixture(scope="session")
def reference_model(tmp_path_factory):
    """(model directory, content digest) for a seeded offline encoder."""
    path = tmp_path_factory.mktemp("model") / "tiny-encoder"
    digest = create_reference_model(path, hidden_size=32, seed=0)
    return path, digest
