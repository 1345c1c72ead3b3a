from __future__ import annotations

import json
import math
import random
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SUN_EDGES, make_manifest
from dsverify.astro import Unresolvable, solar_elevation
from dsverify.checks import (
    _merge_columns,
    check_class_proportion,
    check_dataset_size,
    check_histogram_compliance,
    check_metadata_conformity,
    check_session_homogeneity,
    check_split_integrity,
    pearson_statistic,
    run_all,
)
from dsverify.manifest import DatasetManifest, DatasetRecord, FixtureParams, GeoPoint, LeakGroups, generate_fixture
from dsverify.outcomes import Verdict
from dsverify.spec_model import FeatureSpec, FieldSource, FieldSpec, SolarElevationSource, parse_drs
from dsverify.stats import SizeBound

UTC = timezone.utc
ABC = FeatureSpec("f", FieldSource("f"), "categorical", (0.3, 0.4, 0.3), categories=("a", "b", "c"))


def values(**counts):
    return [k for k, n in counts.items() for _ in range(n)]


class TestHistogram:
    def test_within_tolerance(self):
        out = check_histogram_compliance(values(a=35, b=38, c=27), ABC, 0.1)
        assert out.verdict is Verdict.PASS
        assert out.metrics["max_deviation"] == pytest.approx(0.05)
        assert out.metrics["observed[a]"] == pytest.approx(0.35)

    def test_two_buckets_off(self):
        out = check_histogram_compliance(values(a=45, b=40, c=15), ABC, 0.1)
        assert out.verdict is Verdict.FAIL
        failing = [d for d in out.diagnostics if d.startswith("bucket")]
        assert [d.split(":")[0] for d in failing] == ["bucket a", "bucket c"]
        assert out.metrics["deviation[a]"] == pytest.approx(0.15)
        assert out.metrics["deviation[c]"] == pytest.approx(0.15)

    def test_deviation_equal_to_tolerance_passes(self):
        out = check_histogram_compliance(values(a=40, b=30, c=30), ABC, 0.1)
        assert out.verdict is Verdict.PASS

    def test_binned_assignment(self):
        spec = FeatureSpec("s", FieldSource("s"), "binned-continuous", (0.5, 0.5), buckets=(0.0, 10.0, 20.0))
        out = check_histogram_compliance([0.0, 9.999, 10.0, 20.0], spec, 0.1)
        assert out.metrics["observed[[0, 10)]"] == 0.5
        assert out.metrics["observed[[10, 20]]"] == 0.5
        out = check_histogram_compliance([-1.0, 5.0, 15.0, 20.5], spec, 0.1)
        assert out.excluded == {"outside bucket range": 2}
        assert out.records_considered == 2

    def test_no_values_is_error(self):
        out = check_histogram_compliance([], ABC, 0.1, [Unresolvable("r1", "missing field f")])
        assert out.verdict is Verdict.ERROR
        assert out.excluded == {"missing field f": 1}

    def test_coverage_hole_fails(self):
        vals = values(a=30, b=40, c=30)
        bad = [Unresolvable(f"x{i}", "missing field gps") for i in range(6)]
        out = check_histogram_compliance(vals, ABC, 0.1, bad)
        assert out.verdict is Verdict.FAIL
        assert out.records_considered + out.records_excluded == 106
        out = check_histogram_compliance(vals, ABC, 0.1, bad[:5])
        assert out.verdict is Verdict.PASS

    @given(st.lists(st.sampled_from("abcz"), min_size=1, max_size=200))
    def test_proportions_sum_to_one(self, vals):
        out = check_histogram_compliance(vals, ABC, 0.1)
        if out.verdict is Verdict.ERROR:
            assert set(vals) == {"z"}
            return
        total = sum(v for k, v in out.metrics.items() if k.startswith("observed["))
        assert abs(total - 1.0) <= 1e-9
        assert out.records_considered + out.records_excluded == len(vals)


def label_manifest(**counts) -> DatasetManifest:
    rows = [(f"r{i}", "train", "g", lab) for i, lab in enumerate(values(**counts))]
    return make_manifest(rows)


class TestClassProportion:
    def test_close_enough(self):
        out = check_class_proportion(label_manifest(stop=52, go=48), {"stop": 0.5, "go": 0.5}, 0.1)
        assert out.verdict is Verdict.PASS

    def test_unspecified_class(self):
        m = label_manifest(stop=50, go=48, **{"yellow-blink": 2})
        out = check_class_proportion(m, {"stop": 0.5, "go": 0.5}, 0.1)
        assert out.verdict is Verdict.FAIL
        assert any("yellow-blink" in d for d in out.diagnostics)

    def test_justification_recorded_not_excused(self):
        text = "safety bias toward stop-signal class"
        out = check_class_proportion(label_manifest(stop=70, go=30), {"stop": 0.5, "go": 0.5}, 0.1, text)
        assert out.verdict is Verdict.FAIL
        assert any(text in d for d in out.diagnostics)

    def test_absent_target_class_counts_as_zero(self):
        out = check_class_proportion(label_manifest(stop=100), {"stop": 0.5, "go": 0.5}, 0.1)
        assert out.metrics["observed[go]"] == 0.0
        assert out.verdict is Verdict.FAIL


def split_manifest(n_test, n_train=10):
    rows = [(f"t{i}", "test", f"gt{i}", "x") for i in range(n_test)]
    rows += [(f"r{i}", "train", f"gr{i}", "x") for i in range(n_train)]
    return make_manifest(rows)


class TestDatasetSize:
    def test_large_enough(self):
        out = check_dataset_size(split_manifest(2000), SizeBound(0.05, 0.05, 0.5, 1))
        assert out.verdict is Verdict.PASS
        assert out.metrics["required_n"] == 1263
        assert out.metrics["test_records"] == 2000

    def test_too_small(self):
        out = check_dataset_size(split_manifest(100), SizeBound(0.1, 0.05, 0.0, 1))
        assert out.verdict is Verdict.FAIL
        assert out.metrics["required_n"] == 123

    def test_degenerate(self):
        assert check_dataset_size(split_manifest(1), SizeBound(20, 0.05, 0.5, 1)).verdict is Verdict.PASS

    def test_empty_test_split_fails(self):
        out = check_dataset_size(split_manifest(0), SizeBound(20, 0.05, 0.5, 1))
        assert out.verdict is Verdict.FAIL
        assert out.metrics["test_records"] == 0


class TestSplitIntegrity:
    def test_clean(self):
        m = make_manifest([("a", "train", "g1", "x"), ("b", "test", "g2", "x")])
        assert check_split_integrity(m).verdict is Verdict.PASS

    def test_leak(self):
        m = make_manifest([("a", "train", "g3", "x"), ("b", "test", "g3", "x"), ("c", "test", "g1", "x")])
        out = check_split_integrity(m)
        assert out.verdict is Verdict.FAIL
        assert out.diagnostics == ("group g3 spans train, test",)

    def test_intra_split_redundancy_allowed(self):
        m = make_manifest([(f"r{i}", "validation", "g4", "x") for i in range(500)])
        assert check_split_integrity(m).verdict is Verdict.PASS

    def test_diagnostics_capped(self):
        rows = [(f"{s}{i}", s, f"g{i}", "x") for i in range(60) for s in ("train", "test")]
        out = check_split_integrity(make_manifest(rows))
        assert out.metrics["leaking_groups"] == 60
        assert len(out.diagnostics) == 51


CAM = FieldSpec("camera_model", "string", True, ("CAM-A",))


class TestMetadataConformity:
    def test_all_allowed(self):
        m = make_manifest([(f"r{i}", "train", "g", "x", {"camera_model": "CAM-A"}) for i in range(5)])
        assert check_metadata_conformity(m, [CAM]).verdict is Verdict.PASS

    def test_disallowed_values_counted(self):
        rows = [(f"r{i}", "train", "g", "x", {"camera_model": "CAM-B" if i < 3 else "CAM-A"}) for i in range(8)]
        out = check_metadata_conformity(make_manifest(rows), [CAM])
        assert out.verdict is Verdict.FAIL
        assert out.metrics["violations[camera_model]"] == 3

    def test_optional_absent_everywhere(self):
        m = make_manifest([("r", "train", "g", "x", {"camera_model": "CAM-A"})])
        out = check_metadata_conformity(m, [CAM, FieldSpec("weather", "string", False)])
        assert out.verdict is Verdict.PASS
        assert any("optional field weather absent" in d for d in out.diagnostics)

    @pytest.mark.parametrize(
        "spec, value, ok",
        [
            (FieldSpec("v", "number"), 3.0, True),
            (FieldSpec("v", "number"), "3", False),
            (FieldSpec("v", "timestamp"), datetime(2020, 1, 1, tzinfo=UTC), True),
            (FieldSpec("v", "timestamp"), "2020-01-01T00:00:00+01:00", False),
            (FieldSpec("v", "geopoint"), GeoPoint(1, 2), True),
            (FieldSpec("v", "geopoint"), {"lat": 95, "lon": 0}, False),
            (FieldSpec("v", "identifier"), "seq-4", True),
            (FieldSpec("v", "identifier"), "two words", False),
            (FieldSpec("v", "number", True, (1.0, 2.0)), 2.0, True),
            (FieldSpec("v", "number", True, (1.0, 2.0)), 3.0, False),
        ],
    )
    def test_kinds(self, spec, value, ok):
        out = check_metadata_conformity(make_manifest([("r", "train", "g", "x", {"v": value})]), [spec])
        assert (out.verdict is Verdict.PASS) == ok

    def test_missing_required(self):
        out = check_metadata_conformity(make_manifest([("r", "train", "g", "x", {})]), [CAM])
        assert out.verdict is Verdict.FAIL


def sessions_manifest(table: dict[str, dict[str, int]]) -> DatasetManifest:
    rows = []
    for session, counts in table.items():
        for label, n in counts.items():
            rows += [(f"{session}-{label}-{i}", "train", session, label) for i in range(n)]
    return make_manifest(rows)


class TestSessionHomogeneity:
    def test_identical_proportions(self):
        m = sessions_manifest({"A": {"x": 30, "y": 20}, "B": {"x": 60, "y": 40}})
        out = check_session_homogeneity(m, 0.05)
        assert out.metrics["statistic"] == 0.0
        assert out.metrics["p_value"] == 1.0
        assert out.verdict is Verdict.PASS

    def test_opposite_mix(self):
        m = sessions_manifest({"A": {"x": 90, "y": 10}, "B": {"x": 10, "y": 90}})
        out = check_session_homogeneity(m, 0.05)
        # hand evaluation: expected 50 per cell, four cells of 40^2/50
        assert out.metrics["statistic"] == pytest.approx(4 * 40**2 / 50, abs=1e-9)
        assert out.metrics["dof"] == 1
        assert out.metrics["p_value"] < 0.01
        assert out.verdict is Verdict.FAIL

    def test_single_session(self):
        out = check_session_homogeneity(sessions_manifest({"A": {"x": 10, "y": 10}}), 0.05)
        assert out.verdict is Verdict.ERROR
        assert "one session" in out.diagnostics[0]

    def test_unachievable_expected_counts(self):
        out = check_session_homogeneity(sessions_manifest({"A": {"x": 2}, "B": {"x": 1, "y": 1}}), 0.05)
        assert out.verdict is Verdict.ERROR

    def test_merge_smallest_into_smaller_neighbour(self):
        # column totals 40, 3, 20, 37 -> merge b (3) into c (20, smaller neighbour)
        cols = [[20, 20], [2, 1], [10, 10], [17, 20]]
        merged, names = _merge_columns(cols, ["a", "b", "c", "d"])
        assert names == ["a", "b+c", "d"]
        assert merged[1] == [12, 11]

    def test_merge_tie_goes_lower(self):
        cols = [[5, 5], [1, 1], [5, 5]]
        _, names = _merge_columns(cols, ["a", "b", "c"])
        assert names == ["a+b", "c"]

    def test_merged_result(self):
        m = sessions_manifest({"A": {"x": 40, "y": 38, "z": 2}, "B": {"x": 42, "y": 37, "z": 1}})
        out = check_session_homogeneity(m, 0.05)
        assert out.metrics["categories"] == 2
        assert any("y+z" in d for d in out.diagnostics)
        assert out.metrics["statistic"] == pytest.approx(pearson_statistic([[40, 40], [42, 38]]), abs=1e-12)

    def test_by_feature(self):
        spec = FeatureSpec("sun", SolarElevationSource("gps", "time"), "binned-continuous", (0.5, 0.5), (-90, 0, 90))
        rows = []
        for s in ("A", "B"):
            for h in range(24):
                meta = {"gps": GeoPoint(45, 0), "time": datetime(2021, 3, 20, h, tzinfo=UTC)}
                rows.append((f"{s}{h}", "train", s, "x", meta))
        out = check_session_homogeneity(make_manifest(rows), 0.05, by="sun", feature=spec)
        assert out.verdict is Verdict.PASS
        assert out.metrics["statistic"] == 0.0

    def test_pearson_against_scipy(self):
        from scipy.stats import chi2_contingency

        table = [[12, 30, 8], [20, 25, 15], [9, 40, 11]]
        stat, p, dof, _ = chi2_contingency(table, correction=False)
        assert pearson_statistic(table) == pytest.approx(stat, rel=1e-12)


# ---------------------------------------------------------------------------
# engine


def drs_text(requirements, features=(), constants=None):
    return json.dumps({
        "drs_version": "2",
        "constants": constants or {"tol": 0.1},
        "metadata_schema": [{"name": "gps", "value_kind": "geopoint"}, {"name": "time", "value_kind": "timestamp"},
                            {"name": "camera_model", "value_kind": "string", "allowed_values": ["CAM-A"]}],
        "features": list(features),
        "requirements": list(requirements),
    })


def simple_req(rid, check, mode="automatic"):
    return {"id": rid, "title": rid, "mode": mode, "check": check, "trace": {"dds": ["REC-42-2"]}, "derived": True}


class TestRunAll:
    def test_empty(self, catalog, sun_fixture):
        report = run_all(parse_drs(drs_text([])), sun_fixture, catalog)
        assert report.outcomes == ()
        assert report.dataset_digest == sun_fixture.digest.hex()

    def test_leak_fails_only_split_integrity(self, catalog, sample_drs):
        m = generate_fixture(
            1, FixtureParams(sun_elevation_mix=(SUN_EDGES, (0.4, 0.3, 0.3)), injected_violations=(LeakGroups(1),))
        )
        report = run_all(sample_drs, m, catalog)
        failed = [o.requirement_id for o in report.outcomes if o.verdict is Verdict.FAIL]
        assert failed == ["REQ-104"]

    def test_manual_pending(self, catalog, sun_fixture):
        check = {"kind": "manual", "instructions": "inspect 20 frames", "required_role": "application_expert"}
        report = run_all(parse_drs(drs_text([simple_req("M-1", check, "manual")])), sun_fixture, catalog)
        (o,) = report.outcomes
        assert o.verdict is Verdict.MANUAL_PENDING
        assert any("inspect 20 frames" in d for d in o.diagnostics)

    def test_ordered_by_id(self, catalog, sun_fixture):
        reqs = [simple_req(r, {"kind": "split_integrity"}) for r in ("R-3", "R-1", "R-2")]
        report = run_all(parse_drs(drs_text(reqs)), sun_fixture, catalog)
        assert [o.requirement_id for o in report.outcomes] == ["R-1", "R-2", "R-3"]

    def test_invalid_document_rejected(self, catalog, sun_fixture):
        from dsverify.checks import InvalidDrsError

        req = simple_req("R-1", {"kind": "split_integrity"})
        req["trace"]["dds"] = ["REC-99-9"]
        with pytest.raises(InvalidDrsError):
            run_all(parse_drs(drs_text([req])), sun_fixture, catalog)

    def test_deterministic(self, catalog, sample_drs, sun_fixture):
        assert run_all(sample_drs, sun_fixture, catalog) == run_all(sample_drs, sun_fixture, catalog)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_permutation_invariance(self, sample_drs, sun_fixture, seed):
        records = list(sun_fixture.records)
        random.Random(seed).shuffle(records)
        shuffled = DatasetManifest.from_records(records)
        a = run_all(sample_drs, sun_fixture)
        b = run_all(sample_drs, shuffled)
        assert a == b


# ---------------------------------------------------------------------------
# equivalence with a literal transcription of the sun-elevation procedure


def rec_10_1_transcription(images, edges, target, tolerance):
    """Line-by-line transcription: build the elevation histogram, then compare every bucket."""
    aHistogramElevation = [0] * (len(edges) - 1)
    for gps, image_time in images:
        sunElev = solar_elevation(gps, image_time)
        for i in range(len(edges) - 1):
            last = i == len(edges) - 2
            if edges[i] <= sunElev < edges[i + 1] or (last and sunElev == edges[i + 1]):
                aHistogramElevation[i] += 1
                break
    n = sum(aHistogramElevation)
    # same float slack as the library so exact-tolerance ties agree
    compliant = all(abs(c / n - t) <= tolerance + 1e-12 for c, t in zip(aHistogramElevation, target))
    return "REQ_101_OK" if compliant else "REQ_101_KO"


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(-89, 89), st.floats(-179, 179),
            st.datetimes(min_value=datetime(1990, 1, 1), max_value=datetime(2040, 1, 1)),
        ),
        min_size=1, max_size=60,
    ),
    st.lists(st.integers(1, 10), min_size=3, max_size=3),
    st.sampled_from([0.05, 0.1, 0.2]),
)
def test_engine_matches_transcription(points, weights, tolerance):
    target = [w / sum(weights) for w in weights]
    target[-1] = 1.0 - sum(target[:-1])
    feature = {"name": "sun_elevation", "source": "solar_elevation(gps, time)", "kind": "binned-continuous",
               "buckets": list(SUN_EDGES), "target": target}
    req = simple_req("REQ-101", {"kind": "histogram_compliance", "feature": "sun_elevation", "tolerance_const": "tol"})
    doc = parse_drs(drs_text([req], [feature], {"tol": tolerance}))
    rows, images = [], []
    for i, (lat, lon, t) in enumerate(points):
        gps, ts = GeoPoint(lat, lon), t.replace(tzinfo=UTC, microsecond=0)
        rows.append((f"r{i}", "train", "g", "x", {"gps": gps, "time": ts}))
        images.append((gps, ts))
    (outcome,) = run_all(doc, make_manifest(rows)).outcomes
    expected = rec_10_1_transcription(images, SUN_EDGES, doc.features[0].target, tolerance)
    assert (outcome.verdict is Verdict.PASS) == (expected == "REQ_101_OK")
