"""Shared pytest plumbing: the acceptance-criteria summary block."""

from __future__ import annotations

from typing import List

_acceptance_lines: List[str] = []


def record_acceptance(line: str) -> None:
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in _acceptance_lines:
        terminalreporter.write_line(line)
