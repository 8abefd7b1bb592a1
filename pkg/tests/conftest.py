from __future__ import annotations

from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from critlab.polynomial import RootSet
from critlab.sampling import RootDistribution


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture()
def random_roots(rng: np.random.Generator) -> Callable[[int], RootSet]:
    def _make(n: int) -> RootSet:
        return RootSet((rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0))

    return _make


@pytest.fixture()
def two_atom() -> RootDistribution:
    return RootDistribution.discrete([1, -1])


@pytest.fixture()
def uniform_disk() -> RootDistribution:
    return RootDistribution.uniform_disk(1.0)


@pytest.fixture()
def write_config(tmp_path: Path) -> Callable[[str], Path]:
    def _write(text: str, name: str = "config.yaml") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
