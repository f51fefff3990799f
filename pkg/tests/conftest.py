"""Pytest configuration and fixtures for confir tests."""

from pathlib import Path

import pytest

from confir.harness import build_corpus
from confir.ir import parse_source
from confir.pipeline import compile_source

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


@pytest.fixture
def fixtures_dir() -> Path:
    """Directory of the hand-written .cir programs."""
    return FIXTURES


@pytest.fixture
def source_of():
    """Parse a fixture by file name."""

    def load(name: str):
        return parse_source(fixture_text(name))

    return load


@pytest.fixture
def compile_fixture():
    """Compile a fixture by file name and return the instrumented program."""

    def build(name: str, seed: int = 7, **kwargs):
        return compile_source(fixture_text(name), seed, **kwargs).program

    return build


@pytest.fixture(scope="session")
def add_incr():
    """The add/incr example, compiled once."""
    return compile_source(fixture_text("add_incr.cir"), 7).program


@pytest.fixture(scope="session")
def ok_program():
    """The ok.cir example, compiled once."""
    return compile_source(fixture_text("ok.cir"), 7).program


@pytest.fixture(scope="session")
def small_corpus():
    """A handful of generated programs that pass inference."""
    return build_corpus(seed=2024, count=12)
