import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"

# criterion -> (status, detail); filled in by test_acceptance
ACCEPTANCE: dict = {}


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def sheldon_text():
    return (DATA / "young-sheldon.txt").read_text(encoding="utf-8")


def released_data():
    root = os.environ.get("SCENETHREADS_DATA")
    return Path(root) if root and Path(root).is_dir() else None


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0].rstrip("abcde")), k)):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{status:4s} criterion {key}: {detail}")
