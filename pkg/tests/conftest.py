from __future__ import annotations

import os
from collections import defaultdict

import pytest
from hypothesis import HealthCheck, settings

from nodemodel.scenario import bundled, load_node

settings.register_profile(
    "default", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=2000, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion -> list of (ok, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[str, list[tuple[bool, str]]] = defaultdict(list)


@pytest.fixture
def acceptance():
    def record(criterion: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE[criterion].append((ok, detail))
        print(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE, key=lambda c: int(c)):
        rows = ACCEPTANCE[crit]
        bad = [d for ok, d in rows if not ok]
        if bad:
            terminalreporter.write_line(
                f"FAIL criterion {crit}: {len(bad)} of {len(rows)} checks failed: " + "; ".join(bad))
        else:
            terminalreporter.write_line(f"PASS criterion {crit}: {len(rows)} checks")


@pytest.fixture(scope="session")
def example_one():
    return load_node(bundled("example_one.json"))


@pytest.fixture(scope="session")
def example_one_full():
    return load_node(bundled("example_one_fullfifo.json"))


@pytest.fixture(scope="session")
def example_two():
    return load_node(bundled("example_two.json"))
