from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from aclab.solvers.cone_builder import SymmetrySplit, shoot_profile
from utils.config import output_root


@pytest.fixture(autouse=True)
def isolated_output(tmp_path, monkeypatch):
    """Every test writes its events and artifacts under its own tmp dir."""
    monkeypatch.setenv("ACLAB_OUTPUT_ROOT", str(tmp_path / "out"))
    monkeypatch.setenv("ACLAB_QUIET", "1")
    output_root.cache_clear()
    yield tmp_path / "out"
    output_root.cache_clear()


@pytest.fixture(scope="session")
def cone7():
    """The non-flat d = 7 profile on the (4, 3) split."""
    return shoot_profile(7, SymmetrySplit(4, 3))


@pytest.fixture(scope="session")
def flat7():
    return shoot_profile(7, SymmetrySplit(6, 1))


@pytest.fixture(scope="session")
def cone16():
    """The d = 7 profile on the (1, 6) split, the one that reproduces lambda_7."""
    return shoot_profile(7, SymmetrySplit(1, 6))
