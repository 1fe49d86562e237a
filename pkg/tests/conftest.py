from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oampnr.config import load_profile  # noqa: E402
from oampnr.source import ModePairGaussian  # noqa: E402

from oracles import random_gamma  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
PAPER_FIT = ROOT / "profiles" / "paper_fit.json"


@pytest.fixture(scope="session")
def paper_fit():
    return load_profile(PAPER_FIT)


@pytest.fixture(scope="session")
def random_states():
    """Three nondegenerate two-mode states with random means and complex covariance."""
    rng = np.random.default_rng(20240607)
    return [ModePairGaussian.from_moments(*random_gamma(rng)) for _ in range(3)]


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS, line

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(line(n))
