from pathlib import Path

import pytest

from lmbrbeam import load_vocabulary, make_evidence

DATA = Path(__file__).parent / "data"

_acceptance_lines = []


def record_acceptance(name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" -- {detail}" if detail else "")
    _acceptance_lines.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def vocab5():
    return load_vocabulary("<s>\n</s>\na\nb\nc")


@pytest.fixture
def worked_evidence(vocab5):
    """("a b </s>", 0.6) and ("a c </s>", 0.4)."""
    v = vocab5
    return make_evidence([v.encode(["a", "b", "</s>"]), v.encode(["a", "c", "</s>"])], [0.6, 0.4])
