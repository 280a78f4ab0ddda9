import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=60)
settings.load_profile("repo")

HERE = os.path.dirname(__file__)


@pytest.fixture
def fixtures_dir():
    return os.path.join(HERE, "fixtures")


def write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


@pytest.fixture
def toy_binary():
    from bakeoff.data import synthetic_classification

    return synthetic_classification(300, n_features=4, seed=3)


def dirichlet_rows(rng, n, k, alpha=1.0):
    return rng.dirichlet(np.full(k, alpha), size=n)


# one line per acceptance criterion, repeated in the terminal summary
_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _VERDICTS.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
