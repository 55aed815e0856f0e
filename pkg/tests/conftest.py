import os
from pathlib import Path

import pytest

DATA_DIR = Path(__file__).parent / "data"
FIXTURE = DATA_DIR / "wisdm_sample_1000.txt"

# criterion number -> (title, outcome, detail); filled by test_acceptance
ACCEPTANCE = {}


def record(num, title, ok, detail=""):
    ACCEPTANCE.setdefault(num, []).append((title, "PASS" if ok else "FAIL", detail))


def record_skip(num, title, reason):
    ACCEPTANCE.setdefault(num, []).append((title, "SKIP", reason))


@pytest.fixture
def fixture_path():
    return FIXTURE


def wisdm_path():
    base = os.environ.get("HAR_DATA_DIR")
    if not base:
        return None
    p = Path(base) / "WISDM_ar_v1.1_raw.txt"
    return p if p.is_file() else None


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        for title, outcome, detail in ACCEPTANCE[num]:
            line = f"[{outcome}] criterion {num}: {title}"
            if detail:
                line += f" -- {detail}"
            terminalreporter.write_line(line)
