import os
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = Path(os.environ.get("FASTUMAP_DATA_DIR", ROOT / "data"))


def dataset_path(name):
    return DATA_DIR / f"{name}.csv"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blobs(n, dim, centers, seed, scale=4.0):
    r = np.random.default_rng(seed)
    c = r.normal(scale=scale, size=(centers, dim))
    y = r.integers(0, centers, n)
    return c[y] + r.normal(size=(n, dim)), y


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
