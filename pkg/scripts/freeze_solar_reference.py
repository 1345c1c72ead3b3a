#!/usr/bin/env python3
"""Regenerate tests/data/solar_reference.json from PyEphem.

PyEphem (XEphem's libastro) is used only here, as an independent oracle; the
test suite reads the frozen values and does not need it installed.

    pip install ephem
    python scripts/freeze_solar_reference.py
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import ephem

OUT = Path(__file__).resolve().parent.parent / "tests" / "data" / "solar_reference.json"

# (lat, lon, UTC time): both hemispheres, all seasons, day and night, polar cases
POINTS = [
    (90.0, 0.0, "2000-12-21T12:00:00Z"),
    (0.0, 0.0, "2000-03-20T12:00:00Z"),
    (48.8566, 2.3522, "2021-06-21T12:00:00Z"),
    (48.8566, 2.3522, "2021-12-21T08:30:00Z"),
    (51.5074, -0.1278, "2019-09-23T17:45:00Z"),
    (40.7128, -74.0060, "2022-03-15T15:20:00Z"),
    (35.6762, 139.6503, "2020-07-01T03:00:00Z"),
    (-33.8688, 151.2093, "2021-01-10T02:00:00Z"),
    (-33.8688, 151.2093, "2021-07-10T23:30:00Z"),
    (-34.6037, -58.3816, "2018-04-05T14:10:00Z"),
    (-1.2921, 36.8219, "2023-10-31T09:00:00Z"),
    (64.1466, -21.9426, "2020-06-20T23:59:00Z"),
    (-77.8463, 166.6863, "2021-12-01T00:00:00Z"),
    (-77.8463, 166.6863, "2021-06-01T12:00:00Z"),
    (19.4326, -99.1332, "1950-02-14T18:00:00Z"),
    (55.7558, 37.6173, "2075-11-11T06:15:00Z"),
    (-26.2041, 28.0473, "1910-08-01T10:00:00Z"),
    (1.3521, 103.8198, "2099-05-05T05:05:00Z"),
    (45.0, 5.0, "2021-09-22T03:00:00Z"),
    (-45.0, -170.0, "2024-02-29T20:00:00Z"),
    (70.0, 25.0, "2022-01-15T11:00:00Z"),
    (-15.7975, -47.8919, "2000-01-01T12:00:00Z"),
]


def elevation(lat: float, lon: float, when: str) -> float:
    obs = ephem.Observer()
    obs.lat = str(lat)
    obs.lon = str(lon)
    obs.elevation = 0
    obs.pressure = 0  # disables refraction: geometric elevation
    obs.date = when.replace("T", " ").rstrip("Z")
    sun = ephem.Sun(obs)
    return math.degrees(float(sun.alt))


def main() -> None:
    rows = [
        {"lat": lat, "lon": lon, "time": when, "elevation": round(elevation(lat, lon, when), 6)}
        for lat, lon, when in POINTS
    ]
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(
        json.dumps({"oracle": f"pyephem {ephem.__version__}, pressure=0", "points": rows}, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"wrote {len(rows)} points to {OUT}")


if __name__ == "__main__":
    main()
