#!/usr/bin/env python3
"""End-to-end workflow on a synthetic dataset, through the command line.

Writes a fixture manifest, validates the sample DRS, verifies before and
after a manual attestation, and prints exit codes plus the text report.
Optional violations reproduce failing certifications.

    python scripts/run_workflow_demo.py --workdir /tmp/demo --leak-groups 2
"""

from __future__ import annotations

import argparse
import json
import tempfile
from pathlib import Path

from dsverify.cli import run_cli

SAMPLE = Path(__file__).resolve().parent.parent / "tests" / "data" / "sample_drs.json"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", type=Path)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--leak-groups", type=int, default=0)
    ap.add_argument("--disallowed", type=int, default=0, help="records with camera_model CAM-B")
    args = ap.parse_args()

    work = args.workdir or Path(tempfile.mkdtemp(prefix="dsverify-"))
    work.mkdir(parents=True, exist_ok=True)
    manifest, report, att = work / "data.jsonl", work / "report.txt", work / "attestations.json"

    fixture = ["fixture", "--seed", str(args.seed), "--sun-mix=-90,0,20,90:0.4,0.3,0.3", "--out", str(manifest)]
    if args.leak_groups:
        fixture += ["--leak-groups", str(args.leak_groups)]
    if args.disallowed:
        fixture += ["--disallowed-value", "camera_model", "CAM-B", str(args.disallowed)]
    run_cli(fixture)

    print("validate:", run_cli(["validate", "--drs", str(SAMPLE)]))
    verify = ["verify", "--drs", str(SAMPLE), "--manifest", str(manifest), "--format", "text", "--out", str(report)]
    print("verify before attestation, exit", run_cli(verify))

    att.write_text(json.dumps([{
        "requirement_id": "REQ-107",
        "inspector": {"name": "Acquisition reviewer", "role": "acquisition_system_expert"},
        "verdict": "Pass",
        "evidence": "camera session logs reviewed against the operational setup",
        "timestamp": "2026-05-04T09:30:00Z",
    }], indent=2))
    print("verify after attestation, exit", run_cli(verify + ["--attestations", str(att)]))
    print()
    print(report.read_text())
    print(f"artifacts in {work}")


if __name__ == "__main__":
    main()
