"""Command-line front end.

    dsverify validate --drs drs.json [--catalog dds.json]
    dsverify verify --drs drs.json --manifest data.jsonl [--attestations a.json]
                    [--format json|text] [--out report.json] [--allow-pending]

Exit codes: 0 pass, 1 fail or error, 2 usage or parse failure, 3 only manual
sign-off pending. Standard output carries only the requested artifact.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .checks import run_all
from .manifest import (
    ClassSkew,
    DisallowedValue,
    FixtureError,
    FixtureParams,
    LeakGroups,
    ManifestError,
    MissingField,
    dump_manifest,
    generate_fixture,
    load_manifest,
)
from .report import AttestationError, exit_code, merge_attestations, parse_attestations, render_report, traceability_matrix
from .spec_model import CatalogError, DdsCatalog, DrsParseError, default_catalog, load_catalog, parse_drs, validate_drs

log = logging.getLogger("dsverify")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_PENDING = 0, 1, 2, 3


class _UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsverify", description="Verify a dataset manifest against its requirement document.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{validate,verify}")

    val = sub.add_parser("validate", help="parse and validate a requirement document")
    val.add_argument("--drs", required=True, type=Path)
    val.add_argument("--catalog", type=Path)

    ver = sub.add_parser("verify", help="run the verification plan on a manifest")
    ver.add_argument("--drs", required=True, type=Path)
    ver.add_argument("--manifest", required=True, type=Path)
    ver.add_argument("--catalog", type=Path)
    ver.add_argument("--attestations", type=Path)
    ver.add_argument("--out", type=Path)
    ver.add_argument("--format", choices=("json", "text"), default="json")
    ver.add_argument("--allow-pending", action="store_true")

    # testing aid, deliberately left out of the help listing
    fix = sub.add_parser("fixture")
    fix.add_argument("--seed", type=int, default=1)
    fix.add_argument("--n-records", type=int, default=1000)
    fix.add_argument("--n-groups", type=int, default=50)
    fix.add_argument("--leak-groups", type=int, default=0)
    fix.add_argument("--class-skew", nargs=2, metavar=("LABEL", "FACTOR"))
    fix.add_argument("--missing-field", nargs=2, metavar=("FIELD", "COUNT"))
    fix.add_argument("--disallowed-value", nargs=3, metavar=("FIELD", "VALUE", "COUNT"))
    fix.add_argument("--sun-mix", help="edges:props, e.g. --sun-mix=-90,0,20,90:0.4,0.3,0.3")
    fix.add_argument("--out", type=Path)
    return parser


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise _UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _catalog(path: Path | None) -> DdsCatalog:
    if path is None:
        return default_catalog()
    try:
        return load_catalog(path)
    except OSError as exc:
        raise _UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    except CatalogError as exc:
        raise _UsageError(f"{path}: {exc}") from None


def _write(data: bytes, out: Path | None) -> None:
    if out is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        out.write_bytes(data)


def _cmd_validate(args: argparse.Namespace) -> int:
    catalog = _catalog(args.catalog)
    try:
        doc = parse_drs(_read(args.drs))
    except DrsParseError as exc:
        print(f"{args.drs}:{exc}", file=sys.stderr)
        return EXIT_USAGE
    diags = validate_drs(doc, catalog)
    errors = sum(1 for d in diags if d.severity == "error")
    warnings = len(diags) - errors
    lines = [str(d) for d in diags] + [f"{errors} errors, {warnings} warnings"]
    _write(("\n".join(lines) + "\n").encode("utf-8"), None)
    return EXIT_FAIL if errors else EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    catalog = _catalog(args.catalog)
    try:
        doc = parse_drs(_read(args.drs))
    except DrsParseError as exc:
        print(f"{args.drs}:{exc}", file=sys.stderr)
        return EXIT_USAGE
    errors = [d for d in validate_drs(doc, catalog) if d.severity == "error"]
    if errors:
        for d in errors:
            print(f"{args.drs}: {d}", file=sys.stderr)
        return EXIT_USAGE
    try:
        manifest = load_manifest(_read(args.manifest), source_uri=str(args.manifest))
    except ManifestError as exc:
        print(f"{args.manifest}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    log.info("loaded %d records, digest %s", len(manifest), manifest.digest.hex())

    report = run_all(doc, manifest, catalog)
    if args.attestations is not None:
        try:
            attestations = parse_attestations(_read(args.attestations))
        except AttestationError as exc:
            print(f"{args.attestations}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        report = merge_attestations(report, attestations)
        for att, reason in report.rejected_attestations:
            print(f"rejected attestation: {reason}", file=sys.stderr)

    matrix = traceability_matrix(doc, report)
    _write(render_report(report, matrix, args.format), args.out)
    return exit_code(report, args.allow_pending)


def _cmd_fixture(args: argparse.Namespace) -> int:
    violations: list = []
    if args.leak_groups:
        violations.append(LeakGroups(args.leak_groups))
    if args.class_skew:
        violations.append(ClassSkew(args.class_skew[0], float(args.class_skew[1])))
    if args.missing_field:
        violations.append(MissingField(args.missing_field[0], int(args.missing_field[1])))
    if args.disallowed_value:
        f, v, n = args.disallowed_value
        violations.append(DisallowedValue(f, v, int(n)))
    sun_mix = None
    if args.sun_mix:
        try:
            edges, props = args.sun_mix.split(":")
            sun_mix = (tuple(float(x) for x in edges.split(",")), tuple(float(x) for x in props.split(",")))
        except ValueError:
            raise _UsageError(f"malformed --sun-mix {args.sun_mix!r}") from None
    params = FixtureParams(
        n_records=args.n_records,
        n_groups=args.n_groups,
        sun_elevation_mix=sun_mix,
        injected_violations=tuple(violations),
    )
    try:
        manifest = generate_fixture(args.seed, params)
    except FixtureError as exc:
        raise _UsageError(str(exc)) from None
    _write(dump_manifest(manifest).encode("utf-8"), args.out)
    return EXIT_OK


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {"validate": _cmd_validate, "verify": _cmd_verify, "fixture": _cmd_fixture}[args.command]
    try:
        return handler(args)
    except _UsageError as exc:
        print(f"dsverify: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
