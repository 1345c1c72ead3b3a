#!/usr/bin/env python3
"""Sun-elevation distribution check: tolerance flip on a synthetic manifest.

Generates a 1,000-record fixture whose sun-elevation buckets sit at a chosen
deviation from the target mix, then retimes records (same place and day) to
move mass into the low-sun bucket step by step. Prints the maximum bucket
deviation and the verdict at each step for the tolerance in the sample DRS.

    python scripts/run_sun_elevation_check.py --seed 7 --steps 0 25 50 75 100
"""

from __future__ import annotations

import argparse
from datetime import timedelta
from pathlib import Path

from dsverify import FixtureParams, generate_fixture, parse_drs, run_all
from dsverify.astro import solar_elevation
from dsverify.manifest import DatasetManifest, DatasetRecord

SAMPLE = Path(__file__).resolve().parent.parent / "tests" / "data" / "sample_drs.json"
EDGES = (-90.0, 0.0, 20.0, 90.0)


def retime(record: DatasetRecord, lo: float, hi: float) -> DatasetRecord:
    gps, t = record.meta["gps"], record.meta["time"]
    day = t.replace(hour=0, minute=0, second=0)
    for minute in range(0, 24 * 60, 5):
        cand = day + timedelta(minutes=minute)
        if lo <= solar_elevation(gps, cand) < hi:
            return DatasetRecord(record.id, record.split, record.group, record.label, {**record.meta, "time": cand})
    raise ValueError(f"no time of day puts the sun in [{lo}, {hi}) for {record.id}")


def shift(manifest: DatasetManifest, per_bucket: int) -> DatasetManifest:
    """Move ``per_bucket`` night and high-sun records into the low-sun bucket."""
    records, moved = list(manifest.records), {0: 0, 2: 0}
    for i, r in enumerate(records):
        e = solar_elevation(r.meta["gps"], r.meta["time"])
        b = 0 if e < 0 else (1 if e < 20 else 2)
        if b in moved and moved[b] < per_bucket:
            records[i] = retime(r, 5.0, 15.0)
            moved[b] += 1
    return DatasetManifest.from_records(records)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--mix", type=float, nargs=3, default=(0.45, 0.30, 0.25), help="initial bucket proportions")
    ap.add_argument("--steps", type=int, nargs="+", default=[0, 25, 50, 75, 100])
    args = ap.parse_args()

    drs = parse_drs(SAMPLE.read_text())
    sun = drs.requirement("REQ-101")
    doc = type(drs)(drs.version, drs.constants, drs.metadata_schema, drs.features, (sun,))
    base = generate_fixture(args.seed, FixtureParams(sun_elevation_mix=(EDGES, tuple(args.mix))))

    print(f"target {drs.feature('sun_elevation').target}, tolerance {drs.constants[sun.check.tolerance_const]}")
    print(f"{'moved':>6} {'observed':>24} {'max dev':>8}  verdict")
    for k in args.steps:
        (o,) = run_all(doc, shift(base, k)).outcomes
        observed = [o.metrics[key] for key in sorted(o.metrics) if key.startswith("observed[")]
        print(f"{2 * k:>6} {str([round(x, 3) for x in observed]):>24} {o.metrics['max_deviation']:>8.3f}  {o.verdict.value}")


if __name__ == "__main__":
    main()
