from pathlib import Path

import numpy as np
import pytest

from sdrmatch import SyntheticSpec, generate_synthetic

DATA_DIR = Path(__file__).parent / "data"
CATTANEO2 = DATA_DIR / "cattaneo2.csv"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synthetic():
    return generate_synthetic(SyntheticSpec(n=200, p=5, r_true=2, confounding_strength=2.0,
                                            seed=3))


@pytest.fixture(scope="session")
def cattaneo2_path():
    return CATTANEO2


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
