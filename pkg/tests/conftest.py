from __future__ import annotations

import math

import pytest
from hypothesis import settings

from ddbh.model import LatticeSpec, ModelParams, PhaseImprint, SourceDrain, build_scenario

settings.register_profile("ddbh", max_examples=40, deadline=None)
settings.load_profile("ddbh")


@pytest.fixture
def pi_ring():
    """Homogeneous phase-imprint ring at the non-interacting resonance."""
    return build_scenario(LatticeSpec(8, "periodic"), ModelParams(1.0, 0.0, -2.0),
                          PhaseImprint(1.0, math.pi / 2, 1.0))


@pytest.fixture
def sd_chain():
    return build_scenario(LatticeSpec(100), ModelParams(1.0, 0.0, -2.1), SourceDrain(1.0, 1.0, 0.0))


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one acceptance line, print it and fail the test when ``ok`` is false."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
