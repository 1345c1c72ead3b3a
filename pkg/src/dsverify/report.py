"""Verification reports: attestation merging, traceability, rendering, exit codes."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Any, Iterable, Sequence

from .manifest import format_timestamp, parse_timestamp
from .outcomes import CheckOutcome, Verdict
from .spec_model import ROLES, DrsDocument

__all__ = [
    "Attestation",
    "AttestationError",
    "Inspector",
    "TraceRow",
    "VerificationReport",
    "exit_code",
    "merge_attestations",
    "parse_attestations",
    "render_report",
    "report_to_json",
    "traceability_matrix",
]


class AttestationError(ValueError):
    pass


@dataclass(frozen=True)
class Inspector:
    name: str
    role: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise AttestationError(f"unknown inspector role {self.role!r}")


@dataclass(frozen=True)
class Attestation:
    requirement_id: str
    inspector: Inspector
    verdict: Verdict
    evidence: str
    timestamp: datetime

    def __post_init__(self) -> None:
        if self.verdict not in (Verdict.PASS, Verdict.FAIL):
            raise AttestationError("an attestation verdict is Pass or Fail")

    def to_json(self) -> dict[str, Any]:
        return {
            "requirement_id": self.requirement_id,
            "inspector": {"name": self.inspector.name, "role": self.inspector.role},
            "verdict": self.verdict.value,
            "evidence": self.evidence,
            "timestamp": format_timestamp(self.timestamp),
        }


def parse_attestations(text: str) -> list[Attestation]:
    """Attestation file: a JSON array of attestation objects."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AttestationError(f"{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, list):
        raise AttestationError("attestation file must hold a JSON array")
    out = []
    for i, item in enumerate(raw):
        try:
            if set(item) != {"requirement_id", "inspector", "verdict", "evidence", "timestamp"}:
                raise AttestationError("keys must be requirement_id, inspector, verdict, evidence, timestamp")
            insp = item["inspector"]
            if not isinstance(insp, dict) or set(insp) != {"name", "role"}:
                raise AttestationError("inspector must be an object with name and role")
            out.append(
                Attestation(
                    requirement_id=str(item["requirement_id"]),
                    inspector=Inspector(str(insp["name"]), str(insp["role"])),
                    verdict=Verdict(item["verdict"]),
                    evidence=str(item["evidence"]),
                    timestamp=parse_timestamp(item["timestamp"]),
                )
            )
        except (AttestationError, ValueError, TypeError) as exc:
            raise AttestationError(f"attestation [{i}]: {exc}") from None
    return out


@dataclass(frozen=True)
class VerificationReport:
    drs_version: str
    dataset_digest: str
    outcomes: tuple[CheckOutcome, ...]
    manual_roles: dict[str, str] = field(default_factory=dict)
    attestations: tuple[Attestation, ...] = ()
    rejected_attestations: tuple[tuple[Attestation, str], ...] = ()

    @property
    def summary(self) -> dict[str, int]:
        counts = Counter(o.verdict for o in self.outcomes)
        return {
            "passed": counts[Verdict.PASS],
            "failed": counts[Verdict.FAIL],
            "pending": counts[Verdict.MANUAL_PENDING],
            "errored": counts[Verdict.ERROR],
        }

    def outcome(self, requirement_id: str) -> CheckOutcome | None:
        for o in self.outcomes:
            if o.requirement_id == requirement_id:
                return o
        return None


def merge_attestations(report: VerificationReport, attestations: Iterable[Attestation]) -> VerificationReport:
    """Apply inspector verdicts to pending manual requirements.

    Attestations on automatic or unknown requirements, from a role other than
    the one required, or conflicting with an earlier attestation on the same
    requirement are rejected and listed in the report. Re-applying an
    attestation already merged is a no-op.
    """
    outcomes = {o.requirement_id: o for o in report.outcomes}
    accepted = list(report.attestations)
    rejected = list(report.rejected_attestations)
    by_req = {a.requirement_id: a for a in accepted}

    def reject(att: Attestation, reason: str) -> None:
        if (att, reason) not in rejected:
            rejected.append((att, reason))

    for att in attestations:
        rid = att.requirement_id
        if rid not in outcomes:
            reject(att, f"unknown requirement {rid!r}")
        elif rid not in report.manual_roles:
            reject(att, f"cannot attest automatic check {rid!r}")
        elif att.inspector.role != report.manual_roles[rid]:
            reject(att, f"role {att.inspector.role} cannot attest {rid!r} (requires {report.manual_roles[rid]})")
        elif rid in by_req:
            if by_req[rid] != att:
                reject(att, f"conflicting attestation for {rid!r}")
        else:
            by_req[rid] = att
            accepted.append(att)
            o = outcomes[rid]
            outcomes[rid] = replace(
                o,
                verdict=att.verdict,
                diagnostics=o.diagnostics
                + (
                    f"attested {att.verdict.value} by {att.inspector.name} ({att.inspector.role}) "
                    f"at {format_timestamp(att.timestamp)}: {att.evidence}",
                ),
            )
    return replace(
        report,
        outcomes=tuple(outcomes[o.requirement_id] for o in report.outcomes),
        attestations=tuple(sorted(accepted, key=lambda a: a.requirement_id)),
        rejected_attestations=tuple(rejected),
    )


@dataclass(frozen=True)
class TraceRow:
    requirement_id: str
    dds_refs: tuple[str, ...]
    system_refs: tuple[str, ...]
    verdict: Verdict | None
    derived: bool


def traceability_matrix(drs: DrsDocument, report: VerificationReport) -> list[TraceRow]:
    """One row per requirement, sorted by id; rows without system refs are derived."""
    rows = []
    for req in sorted(drs.requirements, key=lambda r: r.id):
        outcome = report.outcome(req.id)
        rows.append(
            TraceRow(
                requirement_id=req.id,
                dds_refs=req.trace.dds,
                system_refs=req.trace.system,
                verdict=outcome.verdict if outcome else None,
                derived=req.derived or not req.trace.system,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Rendering


def _num(x: float) -> float | int:
    x = float(x)
    if x == 0:
        return 0.0  # folds -0.0
    return x


def _outcome_json(o: CheckOutcome) -> dict[str, Any]:
    return {
        "requirement_id": o.requirement_id,
        "verdict": o.verdict.value,
        "metrics": {k: _num(v) for k, v in sorted(o.metrics.items())},
        "diagnostics": list(o.diagnostics),
        "records_considered": o.records_considered,
        "records_excluded": o.records_excluded,
        "exclusions": dict(sorted(o.excluded.items())),
    }


def report_to_json(report: VerificationReport, matrix: Sequence[TraceRow]) -> dict[str, Any]:
    return {
        "drs_version": report.drs_version,
        "dataset_digest": report.dataset_digest,
        "outcomes": [_outcome_json(o) for o in report.outcomes],
        "trace": [
            {
                "requirement_id": r.requirement_id,
                "dds_refs": list(r.dds_refs),
                "system_refs": list(r.system_refs),
                "verdict": r.verdict.value if r.verdict else None,
                "derived": r.derived,
            }
            for r in matrix
        ],
        "summary": report.summary,
        "attestations": [a.to_json() for a in report.attestations],
        "rejected_attestations": [
            {"attestation": a.to_json(), "reason": reason} for a, reason in report.rejected_attestations
        ],
    }


def _render_text(report: VerificationReport, matrix: Sequence[TraceRow]) -> str:
    s = report.summary
    lines = [
        f"DRS version: {report.drs_version}",
        f"dataset digest: {report.dataset_digest}",
        f"summary: {s['passed']} passed, {s['failed']} failed, {s['pending']} pending, {s['errored']} errored",
        "",
    ]
    for o in report.outcomes:
        head = f"{o.verdict.tag:<7} {o.requirement_id}"
        if "max_deviation" in o.metrics:
            head += f"  max deviation {o.metrics['max_deviation']:.4f}"
        lines.append(head)
        for k, v in sorted(o.metrics.items()):
            lines.append(f"    {k} = {v:.6g}")
        for d in o.diagnostics:
            lines.append(f"    - {d}")
        if o.excluded:
            lines.append(f"    excluded: " + ", ".join(f"{k} ({n})" for k, n in sorted(o.excluded.items())))
    lines += ["", "traceability:"]
    for r in matrix:
        verdict = r.verdict.tag if r.verdict else "-"
        lines.append(
            f"  {r.requirement_id:<12} {verdict:<7} dds=[{', '.join(r.dds_refs)}] "
            f"system=[{', '.join(r.system_refs)}]{'  (derived)' if r.derived else ''}"
        )
    for a, reason in report.rejected_attestations:
        lines.append(f"rejected attestation on {a.requirement_id} by {a.inspector.name}: {reason}")
    return "\n".join(lines) + "\n"


def render_report(report: VerificationReport, matrix: Sequence[TraceRow], format: str = "json") -> bytes:
    """Canonical rendering; identical reports always give identical bytes."""
    if format == "json":
        text = json.dumps(report_to_json(report, matrix), indent=2, sort_keys=True,
                          ensure_ascii=False, allow_nan=False) + "\n"
    elif format == "text":
        text = _render_text(report, matrix)
    else:
        raise ValueError(f"unknown format {format!r}")
    return text.encode("utf-8")


def exit_code(report: VerificationReport, allow_pending: bool = False) -> int:
    """0 clean, 1 any Fail or Error, 3 when only pending manual checks block."""
    s = report.summary
    if s["failed"] or s["errored"]:
        return 1
    if s["pending"] and not allow_pending:
        return 3
    return 0
