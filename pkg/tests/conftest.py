from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Callable, Dict, List

import pytest

from kinspec.discretize import OperatorSet, VelocityGrid, assemble_operators, build_grid
from kinspec.kernel import KernelParams, KernelQuad


@pytest.fixture(scope="session")
def project_root() -> Path:
    return Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def tests_dir(project_root: Path) -> Path:
    return project_root / "tests"


@pytest.fixture(scope="session")
def params() -> KernelParams:
    return KernelParams(d=3, gamma=0.5)


@pytest.fixture(scope="session")
def quad() -> KernelQuad:
    return KernelQuad()


@pytest.fixture(scope="session")
def grid8() -> VelocityGrid:
    return build_grid(3, "hermite", 8)


@pytest.fixture(scope="session")
def grid6() -> VelocityGrid:
    return build_grid(3, "hermite", 6)


@pytest.fixture(scope="session")
def ops8(grid8: VelocityGrid, params: KernelParams, quad: KernelQuad) -> OperatorSet:
    """Default d=3 operators: 8 Hermite nodes per axis, gamma = 0.5."""
    return assemble_operators(grid8, params, quad)


@pytest.fixture(scope="session")
def ops6(grid6: VelocityGrid, params: KernelParams, quad: KernelQuad) -> OperatorSet:
    """Smaller operators for tests that need many eigendecompositions."""
    return assemble_operators(grid6, params, quad)


@pytest.fixture
def read_json() -> Callable[[Path | str], Dict[str, Any]]:
    def _read_json(path: Path | str) -> Dict[str, Any]:
        p = Path(path)
        with p.open("r", encoding="utf-8") as f:
            return json.load(f)

    return _read_json


@pytest.fixture
def read_csv() -> Callable[[Path | str], List[Dict[str, str]]]:
    def _read_csv(path: Path | str) -> List[Dict[str, str]]:
        p = Path(path)
        with p.open("r", encoding="utf-8", newline="") as f:
            return list(csv.DictReader(f))

    return _read_csv
