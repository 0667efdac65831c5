from __future__ import annotations

import pytest

from vauth.principal import Principal

import support


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = support.summary_lines()
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)


@pytest.fixture
def clock():
    return support.FakeClock()


@pytest.fixture
def frames(monkeypatch):
    log = support.FrameLog()
    with log.patched(monkeypatch):
        yield log


@pytest.fixture
def network(monkeypatch):
    rec = support.NetworkRecorder()
    with rec.patched(monkeypatch):
        yield rec


@pytest.fixture
def servers():
    """Collects servers started by a test and stops them afterwards."""
    started = []
    yield started
    for s in reversed(started):
        s.stop()


@pytest.fixture
def alice():
    return Principal.create("Alice")
