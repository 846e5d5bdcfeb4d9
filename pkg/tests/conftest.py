"""공용 fixture: binomial cascade, db4, offset 스케줄, 기준값."""

import json
from pathlib import Path

import pytest

from scripts.mfa.capacity import CascadeCapacity, ProductCapacity
from scripts.mfa.config import ToolDefaults
from scripts.mfa.wavelet import build_spec, find_offset_schedule

BASELINE_PATH = Path(__file__).parent / "regression_baseline.json"


@pytest.fixture(scope="session")
def baseline() -> dict:
    with open(BASELINE_PATH, encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture
def mu() -> CascadeCapacity:
    return CascadeCapacity([0.25, 0.75])


@pytest.fixture
def nu() -> CascadeCapacity:
    return CascadeCapacity([0.3, 0.7])


@pytest.fixture
def xi(mu, nu) -> ProductCapacity:
    return ProductCapacity(mu, nu)


@pytest.fixture(scope="session")
def db4():
    return build_spec("db4", 14)


@pytest.fixture(scope="session")
def schedule(db4):
    return find_offset_schedule(db4, 1, 16, grid_resolution=12)


@pytest.fixture
def defaults() -> ToolDefaults:
    return ToolDefaults()
