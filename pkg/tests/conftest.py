"""Shared fixtures."""

from __future__ import annotations

import pytest

from qbatch.lang import parse
from qbatch.pulses import PulseLibrary

from helpers import TWO_SUBCIRCUIT_SOURCE


@pytest.fixture(scope="session")
def library() -> PulseLibrary:
    return PulseLibrary.default()


@pytest.fixture()
def two_sub_program():
    return parse(TWO_SUBCIRCUIT_SOURCE)
