from __future__ import annotations

import json
import subprocess
import sys

import pytest

from conftest import DATA
from dsverify.cli import run_cli
from dsverify.manifest import dump_manifest

SAMPLE = str(DATA / "sample_drs.json")


@pytest.fixture(scope="module")
def manifest_path(tmp_path_factory, sun_fixture):
    path = tmp_path_factory.mktemp("m") / "data.jsonl"
    path.write_text(dump_manifest(sun_fixture), encoding="utf-8")
    return str(path)


def test_validate_good(capsys):
    assert run_cli(["validate", "--drs", SAMPLE]) == 0
    assert capsys.readouterr().out.endswith("0 errors, 0 warnings\n")


def test_validate_dangling(tmp_path, capsys):
    doc = json.loads((DATA / "sample_drs.json").read_text())
    doc["requirements"][0]["trace"]["dds"] = ["REC-99-9"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert run_cli(["validate", "--drs", str(path)]) == 1
    out = capsys.readouterr().out
    assert "requirements[REQ-101].trace.dds[0]" in out
    assert "1 errors" in out


def test_validate_parse_error(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"drs_version": "1",\n  "constants": }')
    assert run_cli(["validate", "--drs", str(path)]) == 2
    assert ":2:" in capsys.readouterr().err


def test_verify_pending(manifest_path, capsys):
    assert run_cli(["verify", "--drs", SAMPLE, "--manifest", manifest_path]) == 3
    data = json.loads(capsys.readouterr().out)
    assert data["summary"]["pending"] == 1
    assert run_cli(["verify", "--drs", SAMPLE, "--manifest", manifest_path, "--allow-pending"]) == 0


def test_verify_with_attestation(manifest_path, tmp_path, capsys):
    att = [{
        "requirement_id": "REQ-107",
        "inspector": {"name": "R. Okafor", "role": "acquisition_system_expert"},
        "verdict": "Pass",
        "evidence": "camera setup log checked",
        "timestamp": "2026-05-04T09:30:00Z",
    }]
    path = tmp_path / "att.json"
    path.write_text(json.dumps(att))
    assert run_cli(["verify", "--drs", SAMPLE, "--manifest", manifest_path, "--attestations", str(path)]) == 0
    assert json.loads(capsys.readouterr().out)["summary"]["passed"] == 7


def test_verify_text_to_file(manifest_path, tmp_path, capsys):
    out = tmp_path / "r.txt"
    run_cli(["verify", "--drs", SAMPLE, "--manifest", manifest_path, "--format", "text", "--out", str(out)])
    assert capsys.readouterr().out == ""
    assert out.read_text().startswith("DRS version:")


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "--drs", SAMPLE],
        ["verify", "--drs", SAMPLE, "--manifest", "/nonexistent.jsonl"],
        ["verify", "--drs", "/nonexistent.json", "--manifest", SAMPLE],
        ["nope"],
        [],
    ],
)
def test_usage_errors(argv, capsys):
    assert run_cli(argv) == 2


def test_fixture_command(tmp_path, capsys):
    out = tmp_path / "f.jsonl"
    assert run_cli(["fixture", "--seed", "3", "--n-records", "100", "--n-groups", "10",
                    "--leak-groups", "2", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 100
    assert run_cli(["verify", "--drs", SAMPLE, "--manifest", str(out)]) == 1
    data = json.loads(capsys.readouterr().out)
    split = next(o for o in data["outcomes"] if o["requirement_id"] == "REQ-104")
    assert split["metrics"]["leaking_groups"] == 2


def test_fixture_infeasible(capsys):
    assert run_cli(["fixture", "--n-records", "3", "--n-groups", "10"]) == 2


def test_subprocess_stdout_identical(manifest_path):
    cmd = [sys.executable, "-m", "dsverify.cli", "verify", "--drs", SAMPLE, "--manifest", manifest_path]
    a = subprocess.run(cmd, capture_output=True)
    b = subprocess.run(cmd, capture_output=True)
    assert a.returncode == b.returncode == 3
    assert a.stdout == b.stdout and a.stdout
    assert a.stderr == b""
