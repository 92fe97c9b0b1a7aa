from __future__ import annotations

import numpy as np
import pytest

from cadenoise.image_core import GrayImage
from cadenoise.testimages import natural_image


def pytest_addoption(parser):
    parser.addoption(
        "--lena128",
        default=None,
        help="path to the canonical 128x128 Lena PGM; enables the absolute Table 1 value check",
    )


@pytest.fixture(scope="session")
def scene128() -> GrayImage:
    return natural_image(128)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    def report(criterion: str, ok: bool | None, detail: str) -> None:
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"[{status}] {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
