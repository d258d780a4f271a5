"""Suite-wide fixtures and hypothesis settings."""

from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from mlcselect.core import default_metric_registry

settings.register_profile(
    "suite", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")

SAMPLE_DATA = Path(__file__).resolve().parents[1] / "sample_data"


@pytest.fixture()
def sample_data() -> Path:
    return SAMPLE_DATA


@pytest.fixture()
def sample_manifests() -> list[str]:
    return sorted(str(p) for p in SAMPLE_DATA.glob("corpus/*.json"))


@pytest.fixture()
def sample_performance() -> str:
    return str(SAMPLE_DATA / "performance.csv")


@pytest.fixture()
def registry():
    return default_metric_registry()
