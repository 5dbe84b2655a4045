"""Shared fixtures: the bundled bench, one enrollment run, one db."""

import pytest

# Verdict lines recorded by the acceptance gate; echoed after the test run.
CRITERION_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERION_LINES):
            terminalreporter.write_line(line)

from canskew import load_scenario, run
from canskew.bundled import load_bundled
from canskew.fingerprint import fingerprint_trace
from canskew.scenario import schedule_maps


def bundled_scenario(name):
    return load_scenario(load_bundled(name))


@pytest.fixture(scope="session")
def normal_doc():
    return run(bundled_scenario("demo-normal"))


@pytest.fixture(scope="session")
def enrollment():
    """(scenario, trace, db records) of the bundled enrollment run."""
    scenario = bundled_scenario("demo-fingerprint")
    doc = run(scenario)
    periods, groups = schedule_maps(scenario)
    records, fingerprints, warnings = fingerprint_trace(
        doc, periods_us=periods, groups=groups
    )
    return scenario, doc, records


@pytest.fixture(scope="session")
def db_records(enrollment):
    return enrollment[2]


@pytest.fixture(scope="session")
def attack_docs():
    return {
        name: run(bundled_scenario(f"demo-{name}"))
        for name in ("dos", "fuzzy", "impersonation")
    }
