"""Verification procedures, one per check kind, and the engine running a whole document."""

from __future__ import annotations

import logging
import re
from collections import Counter, defaultdict
from datetime import datetime
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from .astro import DerivationError, Unresolvable, derive_feature
from .manifest import DatasetManifest, GeoPoint, format_timestamp
from .outcomes import CheckOutcome, Verdict
from .report import VerificationReport
from .spec_model import (
    ClassProportion,
    DatasetSize,
    DdsCatalog,
    DrsDocument,
    FeatureSpec,
    FieldSpec,
    HistogramCompliance,
    Manual,
    MetadataConformity,
    Requirement,
    SessionHomogeneity,
    SpecDiagnostic,
    SplitIntegrity,
    validate_drs,
)
from .stats import SizeBound, bernstein_radius, chi_square_pvalue, required_sample_size

__all__ = [
    "InvalidDrsError",
    "MAX_EXCLUSION_RATE",
    "MIN_EXPECTED_COUNT",
    "check_class_proportion",
    "check_dataset_size",
    "check_histogram_compliance",
    "check_metadata_conformity",
    "check_session_homogeneity",
    "check_split_integrity",
    "leaking_groups",
    "run_all",
]

log = logging.getLogger(__name__)

MAX_EXCLUSION_RATE = 0.05
MIN_EXPECTED_COUNT = 5
MAX_LISTED_GROUPS = 50
# absorbs float noise in |observed - target| so a deviation of exactly the tolerance passes
_COMPARE_SLACK = 1e-12
_IDENTIFIER_RE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.:-]*$")


class InvalidDrsError(ValueError):
    def __init__(self, diagnostics: list[SpecDiagnostic]):
        self.diagnostics = diagnostics
        super().__init__(f"{len(diagnostics)} error(s) in requirement document; first: {diagnostics[0]}")


def _fmt(x: float) -> str:
    return f"{x:.4g}"


def _deviation_outcome(
    requirement_id: str,
    labels: Sequence[str],
    counts: Sequence[int],
    targets: Sequence[float],
    tolerance: float,
    excluded: Mapping[str, int],
    extra_fail: Sequence[str] = (),
) -> CheckOutcome:
    considered = sum(counts)
    total = considered + sum(excluded.values())
    metrics: dict[str, float] = {}
    diags: list[str] = list(extra_fail)
    max_dev = 0.0
    failing = bool(extra_fail)
    for label, count, target in zip(labels, counts, targets):
        observed = count / considered
        dev = abs(observed - target)
        metrics[f"observed[{label}]"] = observed
        metrics[f"target[{label}]"] = float(target)
        metrics[f"deviation[{label}]"] = dev
        max_dev = max(max_dev, dev)
        if dev > tolerance + _COMPARE_SLACK:
            failing = True
            diags.append(
                f"bucket {label}: observed {_fmt(observed)} vs target {_fmt(target)} "
                f"(deviation {_fmt(dev)} > {_fmt(tolerance)})"
            )
    metrics["max_deviation"] = max_dev
    metrics["tolerance"] = float(tolerance)
    rate = (total - considered) / total if total else 0.0
    metrics["exclusion_rate"] = rate
    if rate > MAX_EXCLUSION_RATE:
        failing = True
        diags.append(f"{total - considered} of {total} records excluded ({_fmt(rate)} > {MAX_EXCLUSION_RATE})")
    return CheckOutcome(
        requirement_id,
        Verdict.FAIL if failing else Verdict.PASS,
        metrics,
        tuple(diags),
        considered,
        dict(sorted(excluded.items())),
    )


def check_histogram_compliance(
    values: Iterable[Any],
    spec: FeatureSpec,
    tolerance: float,
    unresolved: Sequence[Unresolvable] = (),
    requirement_id: str = "",
) -> CheckOutcome:
    """Compare the observed bucket proportions of a feature to its target.

    Fails when any bucket's proportion differs from the target by more than
    ``tolerance`` (absolute proportion units), or when more than 5% of the
    records could not be placed in a bucket.
    """
    labels = spec.bucket_labels
    counts = [0] * len(labels)
    excluded: Counter[str] = Counter(u.reason for u in unresolved)
    outside = "undeclared category" if spec.kind == "categorical" else "outside bucket range"
    for v in values:
        i = spec.bucket_index(v)
        if i is None:
            excluded[outside] += 1
        else:
            counts[i] += 1
    if not labels:
        return CheckOutcome(requirement_id, Verdict.ERROR, diagnostics=(f"feature {spec.name!r} has no buckets",))
    if sum(counts) == 0:
        return CheckOutcome(
            requirement_id,
            Verdict.ERROR,
            diagnostics=(f"no resolvable values for feature {spec.name!r}",),
            excluded=dict(sorted(excluded.items())),
        )
    return _deviation_outcome(requirement_id, labels, counts, spec.target, tolerance, excluded)


def check_class_proportion(
    manifest: DatasetManifest,
    target: Mapping[str, float],
    tolerance: float,
    justification: str | None = None,
    requirement_id: str = "",
) -> CheckOutcome:
    """Label proportions against the operational class mix.

    A justification never turns a failure into a pass; it is attached to the
    diagnostics for the reviewer.
    """
    counts = Counter(r.label for r in manifest.records)
    labels = sorted(target)
    unspecified = sorted(set(counts) - set(target))
    extra = [f"unspecified class {label!r} ({counts[label]} records)" for label in unspecified]
    all_labels = labels + unspecified
    outcome = _deviation_outcome(
        requirement_id,
        all_labels,
        [counts.get(l, 0) for l in all_labels],
        [target.get(l, 0.0) for l in all_labels],
        tolerance,
        {},
        extra,
    )
    if outcome.verdict is Verdict.FAIL and justification:
        outcome = CheckOutcome(
            outcome.requirement_id,
            outcome.verdict,
            outcome.metrics,
            outcome.diagnostics + (f"justification on record: {justification}",),
            outcome.records_considered,
            outcome.excluded,
        )
    return outcome


def check_dataset_size(manifest: DatasetManifest, bound: SizeBound, requirement_id: str = "") -> CheckOutcome:
    n_test = sum(1 for r in manifest.records if r.split == "test")
    required = required_sample_size(bound.epsilon, bound.delta, bound.sigma_hat, bound.range_R)
    metrics = {"test_records": float(n_test), "required_n": float(required)}
    diags: list[str] = []
    if n_test:
        metrics["radius_at_test_size"] = bernstein_radius(n_test, bound.delta, bound.sigma_hat, bound.range_R)
    if n_test >= required:
        verdict = Verdict.PASS
    else:
        verdict = Verdict.FAIL
        diags.append(f"test split has {n_test} records, {required} required")
    return CheckOutcome(requirement_id, verdict, metrics, tuple(diags), n_test)


def leaking_groups(manifest: DatasetManifest) -> dict[str, list[str]]:
    """Groups whose records span more than one split, mapped to those splits."""
    splits: dict[str, set[str]] = defaultdict(set)
    for r in manifest.records:
        splits[r.group].add(r.split)
    order = {"train": 0, "validation": 1, "test": 2}
    return {g: sorted(s, key=order.__getitem__) for g, s in sorted(splits.items()) if len(s) > 1}


def check_split_integrity(manifest: DatasetManifest, requirement_id: str = "") -> CheckOutcome:
    leaks = leaking_groups(manifest)
    n_groups = len({r.group for r in manifest.records})
    metrics = {"leaking_groups": float(len(leaks)), "groups": float(n_groups)}
    diags = [f"group {g} spans {', '.join(s)}" for g, s in list(leaks.items())[:MAX_LISTED_GROUPS]]
    if len(leaks) > MAX_LISTED_GROUPS:
        diags.append(f"... and {len(leaks) - MAX_LISTED_GROUPS} more groups")
    verdict = Verdict.FAIL if leaks else Verdict.PASS
    return CheckOutcome(requirement_id, verdict, metrics, tuple(diags), len(manifest.records))


def _kind_violation(spec: FieldSpec, value: Any) -> str | None:
    kind = spec.value_kind
    if kind == "number":
        ok = isinstance(value, float) and not isinstance(value, bool)
    elif kind == "string":
        ok = isinstance(value, (str, datetime))
    elif kind == "identifier":
        ok = isinstance(value, str) and bool(_IDENTIFIER_RE.match(value))
    elif kind == "timestamp":
        ok = isinstance(value, datetime)
    else:
        ok = isinstance(value, GeoPoint)
    if not ok:
        return f"not a valid {kind}"
    if spec.allowed_values is not None:
        probe = format_timestamp(value) if isinstance(value, datetime) else value
        if probe not in spec.allowed_values:
            return f"value {probe!r} not allowed"
    return None


def check_metadata_conformity(
    manifest: DatasetManifest, schema: Sequence[FieldSpec], requirement_id: str = ""
) -> CheckOutcome:
    """Required fields present; every present field of the right kind and in its allowed set."""
    if not schema:
        return CheckOutcome(requirement_id, Verdict.ERROR, diagnostics=("metadata schema is empty",))
    violations: Counter[str] = Counter()
    examples: dict[str, str] = {}
    present: Counter[str] = Counter()
    for rec in sorted(manifest.records, key=lambda r: r.id):
        for spec in schema:
            if spec.name not in rec.meta:
                if spec.required:
                    violations[spec.name] += 1
                    examples.setdefault(spec.name, f"{rec.id}: missing required field")
                continue
            present[spec.name] += 1
            problem = _kind_violation(spec, rec.meta[spec.name])
            if problem:
                violations[spec.name] += 1
                examples.setdefault(spec.name, f"{rec.id}: {problem}")
    metrics = {f"violations[{s.name}]": float(violations[s.name]) for s in schema}
    metrics["violations"] = float(sum(violations.values()))
    diags = [
        f"field {s.name}: {violations[s.name]} violation(s), e.g. {examples[s.name]}"
        for s in schema
        if violations[s.name]
    ]
    for s in schema:
        if not s.required and present[s.name] == 0:
            diags.append(f"info: optional field {s.name} absent from every record")
    declared = {s.name for s in schema}
    undeclared = sorted({k for r in manifest.records for k in r.meta} - declared)
    if undeclared:
        diags.append(f"info: undeclared metadata fields {', '.join(undeclared)}")
    verdict = Verdict.FAIL if violations else Verdict.PASS
    return CheckOutcome(requirement_id, verdict, metrics, tuple(diags), len(manifest.records))


def _merge_columns(columns: list[list[int]], names: list[str]) -> tuple[list[list[int]], list[str]] | None:
    """Merge adjacent categories until every expected cell count reaches the minimum.

    The smallest category (lowest index on ties) is merged into its smaller
    neighbour (lower one on ties). Returns None when one category remains and
    the minimum is still not met.
    """
    columns = [list(c) for c in columns]
    names = list(names)
    while True:
        n_rows = len(columns[0])
        row_totals = [sum(col[s] for col in columns) for s in range(n_rows)]
        grand = sum(row_totals)
        col_totals = [sum(c) for c in columns]
        # expected count min over cells is min(row) * col / grand
        if all(min(row_totals) * c >= MIN_EXPECTED_COUNT * grand for c in col_totals):
            return columns, names
        if len(columns) == 1:
            return None
        c = min(range(len(columns)), key=lambda i: (col_totals[i], i))
        if c == 0:
            other = 1
        elif c == len(columns) - 1:
            other = c - 1
        else:
            other = c - 1 if col_totals[c - 1] <= col_totals[c + 1] else c + 1
        lo, hi = sorted((c, other))
        columns[lo] = [a + b for a, b in zip(columns[lo], columns[hi])]
        names[lo] = f"{names[lo]}+{names[hi]}"
        del columns[hi], names[hi]


def pearson_statistic(table: Sequence[Sequence[int]]) -> float:
    """Pearson chi-square statistic of a sessions x categories count table, computed exactly."""
    row_totals = [sum(row) for row in table]
    col_totals = [sum(col) for col in zip(*table)]
    grand = sum(row_totals)
    stat = Fraction(0)
    for r, row in enumerate(table):
        for c, observed in enumerate(row):
            rc = row_totals[r] * col_totals[c]
            if rc == 0:
                continue
            stat += Fraction((grand * observed - rc) ** 2, grand * rc)
    return float(stat)


def check_session_homogeneity(
    manifest: DatasetManifest,
    alpha: float,
    by: str = "label",
    session_field: str = "group",
    feature: FeatureSpec | None = None,
    requirement_id: str = "",
) -> CheckOutcome:
    """Chi-square test that the label (or feature bucket) mix is the same in every session.

    Homogeneity across sessions is necessary for i.i.d. data but does not
    establish it.
    """
    excluded: Counter[str] = Counter()
    cells: list[tuple[str, Any]] = []
    if by == "label":
        category_of = {r.id: r.label for r in manifest.records}
        names = sorted(set(category_of.values()))
    else:
        if feature is None:
            raise ValueError("feature spec required when grouping by a feature")
        values, bad = derive_feature(manifest, feature)
        for u in bad:
            excluded[u.reason] += 1
        category_of = {}
        for rid, v in values:
            i = feature.bucket_index(v)
            if i is None:
                excluded["outside bucket range"] += 1
            else:
                category_of[rid] = i
        names = feature.bucket_labels
    for rec in manifest.records:
        if rec.id not in category_of:
            continue
        if session_field == "group":
            session = rec.group
        elif session_field in rec.meta:
            session = str(rec.meta[session_field])
        else:
            excluded[f"missing field {session_field}"] += 1
            continue
        cells.append((session, category_of[rec.id]))

    sessions = sorted({s for s, _ in cells})
    considered = len(cells)
    ex = dict(sorted(excluded.items()))
    if len(sessions) < 2:
        return CheckOutcome(
            requirement_id, Verdict.ERROR,
            diagnostics=("homogeneity undefined for one session",), records_considered=considered, excluded=ex,
        )
    if by == "label":
        index = {n: i for i, n in enumerate(names)}
        cat_index = lambda c: index[c]  # noqa: E731
    else:
        cat_index = lambda c: c  # noqa: E731
    row_of = {s: i for i, s in enumerate(sessions)}
    columns = [[0] * len(sessions) for _ in names]
    for session, cat in cells:
        columns[cat_index(cat)][row_of[session]] += 1

    merged = _merge_columns(columns, [str(n) for n in names])
    if merged is None:
        return CheckOutcome(
            requirement_id, Verdict.ERROR,
            diagnostics=(f"expected counts below {MIN_EXPECTED_COUNT} even after merging all categories",),
            records_considered=considered, excluded=ex,
        )
    columns, merged_names = merged
    table = [[col[s] for col in columns] for s in range(len(sessions))]
    statistic = pearson_statistic(table)
    dof = (len(sessions) - 1) * (len(columns) - 1)
    p = chi_square_pvalue(statistic, dof)
    metrics = {
        "statistic": statistic,
        "dof": float(dof),
        "p_value": p,
        "alpha": float(alpha),
        "sessions": float(len(sessions)),
        "categories": float(len(columns)),
    }
    diags = ["cross-session homogeneity is a necessary condition for i.i.d. data, not a proof of it"]
    if len(merged_names) != len(names):
        diags.append(f"categories merged for expected counts >= {MIN_EXPECTED_COUNT}: {', '.join(merged_names)}")
    if p < alpha:
        verdict = Verdict.FAIL
        diags.append(f"distribution differs across sessions (p = {p:.3g} < alpha = {alpha:g})")
    else:
        verdict = Verdict.PASS
    return CheckOutcome(requirement_id, verdict, metrics, tuple(diags), considered, ex)


def _evaluate(req: Requirement, drs: DrsDocument, manifest: DatasetManifest) -> CheckOutcome:
    check = req.check
    if isinstance(check, Manual):
        return CheckOutcome(
            req.id,
            Verdict.MANUAL_PENDING,
            diagnostics=(f"required role: {check.required_role}", f"instructions: {check.instructions}"),
        )
    if isinstance(check, HistogramCompliance):
        feature = drs.feature(check.feature)
        values, bad = derive_feature(manifest, feature, {f.name for f in drs.metadata_schema})
        return check_histogram_compliance(
            [v for _, v in values], feature, drs.constants[check.tolerance_const], bad, req.id
        )
    if isinstance(check, ClassProportion):
        return check_class_proportion(
            manifest, check.target_map, drs.constants[check.tolerance_const], check.justification, req.id
        )
    if isinstance(check, DatasetSize):
        bound = SizeBound(check.epsilon, check.delta, check.sigma_hat, check.range)
        return check_dataset_size(manifest, bound, req.id)
    if isinstance(check, SplitIntegrity):
        return check_split_integrity(manifest, req.id)
    if isinstance(check, MetadataConformity):
        return check_metadata_conformity(manifest, drs.metadata_schema, req.id)
    if isinstance(check, SessionHomogeneity):
        feature = None if check.by == "label" else drs.feature(check.by)
        return check_session_homogeneity(manifest, check.alpha, check.by, check.session_field, feature, req.id)
    raise TypeError(f"unhandled check kind {check.kind!r}")


def run_all(drs: DrsDocument, manifest: DatasetManifest, catalog: DdsCatalog | None = None) -> VerificationReport:
    """Run every requirement of ``drs`` against ``manifest``.

    One outcome per requirement, ordered by requirement id. A check that
    cannot be evaluated yields an Error outcome instead of raising. When a
    catalog is given the document is validated first and InvalidDrsError is
    raised on any error diagnostic.
    """
    if catalog is not None:
        errors = [d for d in validate_drs(drs, catalog) if d.severity == "error"]
        if errors:
            raise InvalidDrsError(errors)
    outcomes = []
    for req in sorted(drs.requirements, key=lambda r: r.id):
        try:
            outcome = _evaluate(req, drs, manifest)
        except (DerivationError, ValueError, KeyError) as exc:
            log.warning("requirement %s could not be evaluated: %s", req.id, exc)
            outcome = CheckOutcome(req.id, Verdict.ERROR, diagnostics=(str(exc),))
        outcomes.append(outcome)
    manual_roles = {
        r.id: r.check.required_role for r in drs.requirements if isinstance(r.check, Manual)
    }
    return VerificationReport(
        drs_version=drs.version,
        dataset_digest=manifest.digest.hex(),
        outcomes=tuple(outcomes),
        manual_roles=manual_roles,
    )
