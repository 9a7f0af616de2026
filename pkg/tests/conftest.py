"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import numpy as np
import pytest

from compkernel import duality, hermite

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> bool:
    """Print and remember one ``PASS``/``FAIL`` line for an acceptance criterion."""
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def gelu_centered_exact() -> duality.Pgf:
    """Dual law of centered GeLU from deterministic quadrature coefficients."""
    spec = hermite.project_coefficients(hermite.get_activation("gelu"), 20)
    return duality.pgf_from_activation(hermite.center_and_normalize(spec))


@pytest.fixture(scope="session")
def swish_centered_exact() -> duality.Pgf:
    spec = hermite.project_coefficients(hermite.get_activation("swish"), 20)
    return duality.pgf_from_activation(hermite.center_and_normalize(spec))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
