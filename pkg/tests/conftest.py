from __future__ import annotations

from pathlib import Path

import pytest

from dsverify.manifest import DatasetManifest, DatasetRecord, FixtureParams, GeoPoint, generate_fixture
from dsverify.spec_model import default_catalog, parse_drs

DATA = Path(__file__).parent / "data"
SUN_EDGES = (-90.0, 0.0, 20.0, 90.0)
SUN_TARGET = (0.4, 0.3, 0.3)


def make_manifest(rows) -> DatasetManifest:
    """Manifest from ``(id, split, group, label)`` tuples, optionally with a meta dict."""
    records = []
    for row in rows:
        rid, split, group, label, *rest = row
        records.append(DatasetRecord(rid, split, group, label, rest[0] if rest else {}))
    return DatasetManifest.from_records(records)


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def sample_drs_text() -> str:
    return (DATA / "sample_drs.json").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def sample_drs(sample_drs_text):
    return parse_drs(sample_drs_text)


@pytest.fixture(scope="session")
def sun_fixture() -> DatasetManifest:
    return generate_fixture(1, FixtureParams(sun_elevation_mix=(SUN_EDGES, SUN_TARGET)))


@pytest.fixture
def paris() -> GeoPoint:
    return GeoPoint(48.8566, 2.3522)
