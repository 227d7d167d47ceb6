import pytest
from hypothesis import settings

from dsir.corpus_io import write_jsonl
from dsir.synthetic import target_corpus, two_domain_corpus

settings.register_profile("default", deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """2k target-domain examples and a 10k raw corpus with 10% target-like text."""
    d = tmp_path_factory.mktemp("corpus")
    target, raw = d / "target.jsonl", d / "raw.jsonl"
    write_jsonl(target, target_corpus(2000, seed=5))
    write_jsonl(raw, two_domain_corpus(10_000, 0.1, seed=6))
    return target, raw


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion and return the verdict."""
    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record
