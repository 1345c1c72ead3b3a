"""Dataset manifests: JSON Lines ingestion, content digest, synthetic fixtures.

One line per record::

    {"id": "img-1", "split": "train", "group": "seq-4", "label": "stop",
     "meta": {"gps": {"lat": 48.8, "lon": 2.3}, "time": "2021-06-01T10:00:00Z"}}

Metadata values are typed on load: ``{"lat", "lon"}`` objects become
:class:`GeoPoint`, strings of the form ``YYYY-MM-DDThh:mm:ssZ`` become UTC
datetimes, numbers become floats. Anything else is kept verbatim and left for
the metadata-conformity check to judge.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Any, Iterable, Mapping, TextIO

__all__ = [
    "SPLITS",
    "ClassSkew",
    "DatasetManifest",
    "DatasetRecord",
    "DisallowedValue",
    "FixtureError",
    "FixtureParams",
    "GeoPoint",
    "LeakGroups",
    "ManifestError",
    "MissingField",
    "canonical_bytes",
    "dataset_digest",
    "dump_manifest",
    "format_timestamp",
    "generate_fixture",
    "load_manifest",
    "parse_timestamp",
]

SPLITS = ("train", "validation", "test")
_TIMESTAMP_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$")


class ManifestError(ValueError):
    def __init__(self, message: str, line: int = 0):
        self.message = message
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


def parse_timestamp(text: str) -> datetime:
    """Strict ``YYYY-MM-DDThh:mm:ssZ`` parser returning an aware UTC datetime."""
    if not _TIMESTAMP_RE.match(text):
        raise ValueError(f"not a UTC ISO-8601 timestamp: {text!r}")
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    split: str
    group: str
    label: str
    meta: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[DatasetRecord, ...]
    digest: bytes
    source_uri: str = ""

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def from_records(cls, records: Iterable[DatasetRecord], source_uri: str = "") -> DatasetManifest:
        records = tuple(records)
        if not records:
            raise ManifestError("empty manifest")
        ids = Counter(r.id for r in records)
        dupes = sorted(i for i, n in ids.items() if n > 1)
        if dupes:
            raise ManifestError(f"duplicate record id {dupes[0]!r}")
        return cls(records, _digest(records), source_uri)

    def split_counts(self) -> dict[str, int]:
        counts = Counter(r.split for r in self.records)
        return {s: counts.get(s, 0) for s in SPLITS}


# ---------------------------------------------------------------------------
# Loading


def _typed_value(value: Any) -> Any:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str) and _TIMESTAMP_RE.match(value):
        try:
            return parse_timestamp(value)
        except ValueError:
            return value
    if isinstance(value, dict) and set(value) == {"lat", "lon"}:
        lat, lon = value["lat"], value["lon"]
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (lat, lon)):
            try:
                return GeoPoint(float(lat), float(lon))
            except ValueError:
                return value
    return value


def _record_from_json(obj: Any, lineno: int) -> DatasetRecord:
    if not isinstance(obj, dict):
        raise ManifestError("record must be a JSON object", lineno)
    unknown = set(obj) - {"id", "split", "group", "label", "meta"}
    if unknown:
        raise ManifestError(f"unknown key {sorted(unknown)[0]!r}", lineno)
    for key in ("id", "split", "group", "label"):
        if key not in obj:
            raise ManifestError(f"missing key {key!r}", lineno)
        if not isinstance(obj[key], str) or not obj[key]:
            raise ManifestError(f"{key!r} must be a non-empty string", lineno)
    if obj["split"] not in SPLITS:
        raise ManifestError(f"unknown split {obj['split']!r} (expected one of {', '.join(SPLITS)})", lineno)
    meta = obj.get("meta", {})
    if not isinstance(meta, dict):
        raise ManifestError("'meta' must be an object", lineno)
    return DatasetRecord(
        id=obj["id"],
        split=obj["split"],
        group=obj["group"],
        label=obj["label"],
        meta={k: _typed_value(v) for k, v in meta.items()},
    )


def load_manifest(stream: TextIO | str, source_uri: str = "") -> DatasetManifest:
    """Read a JSON Lines manifest; the first malformed line aborts with its line number."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    records: list[DatasetRecord] = []
    first_seen: dict[str, int] = {}
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"malformed JSON at column {exc.colno}: {exc.msg}", lineno) from None
        rec = _record_from_json(obj, lineno)
        if rec.id in first_seen:
            raise ManifestError(
                f"duplicate record id {rec.id!r} (lines {first_seen[rec.id]} and {lineno})", lineno
            )
        first_seen[rec.id] = lineno
        records.append(rec)
    if not records:
        raise ManifestError("empty manifest")
    return DatasetManifest(tuple(records), _digest(records), source_uri)


# ---------------------------------------------------------------------------
# Canonical form and digest


def _canonical_value(value: Any) -> Any:
    if isinstance(value, GeoPoint):
        return {"lat": float(value.lat), "lon": float(value.lon)}
    if isinstance(value, datetime):
        return format_timestamp(value)
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return float(value)
    return value


def record_to_json(rec: DatasetRecord) -> dict[str, Any]:
    return {
        "id": rec.id,
        "split": rec.split,
        "group": rec.group,
        "label": rec.label,
        "meta": {k: _canonical_value(v) for k, v in rec.meta.items()},
    }


def canonical_bytes(records: Iterable[DatasetRecord]) -> bytes:
    """Records sorted by id, one compact sorted-key JSON object per line, UTF-8."""
    lines = [
        json.dumps(record_to_json(r), sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"
        for r in sorted(records, key=lambda r: r.id)
    ]
    return "".join(lines).encode("utf-8")


def _digest(records: Iterable[DatasetRecord]) -> bytes:
    return hashlib.sha256(canonical_bytes(records)).digest()


def dataset_digest(manifest: DatasetManifest) -> bytes:
    """SHA-256 of the canonical record stream; independent of file order."""
    return _digest(manifest.records)


def dump_manifest(manifest: DatasetManifest | Iterable[DatasetRecord]) -> str:
    """JSON Lines text in record order (round-trips through :func:`load_manifest`)."""
    records = manifest.records if isinstance(manifest, DatasetManifest) else manifest
    return "".join(
        json.dumps(record_to_json(r), sort_keys=True, ensure_ascii=False) + "\n" for r in records
    )


# ---------------------------------------------------------------------------
# Synthetic fixtures


class FixtureError(ValueError):
    pass


@dataclass(frozen=True)
class LeakGroups:
    """Move one record from each of ``k`` groups into a different split."""

    k: int


@dataclass(frozen=True)
class ClassSkew:
    """Multiply one class's target share by ``factor`` before drawing labels."""

    label: str
    factor: float


@dataclass(frozen=True)
class MissingField:
    field: str
    count: int


@dataclass(frozen=True)
class DisallowedValue:
    field: str
    value: Any
    count: int


@dataclass(frozen=True)
class FixtureParams:
    n_records: int = 1000
    n_groups: int = 50
    split_fractions: Mapping[str, float] = field(
        default_factory=lambda: {"train": 0.6, "validation": 0.15, "test": 0.25}
    )
    class_fractions: Mapping[str, float] = field(default_factory=lambda: {"stop": 0.5, "proceed": 0.5})
    geo_box: tuple[float, float, float, float] = (43.0, 50.0, -1.0, 7.0)  # lat_min, lat_max, lon_min, lon_max
    time_range: tuple[datetime, datetime] = (
        datetime(2021, 1, 1, tzinfo=timezone.utc),
        datetime(2022, 1, 1, tzinfo=timezone.utc),
    )
    # (bucket edges, proportions): draw timestamps so sun elevation follows this mix.
    sun_elevation_mix: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    camera_models: tuple[str, ...] = ("CAM-A",)
    weather: tuple[str, ...] = ("clear", "rain", "fog")
    gps_field: str = "gps"
    time_field: str = "time"
    injected_violations: tuple[Any, ...] = ()


def _quota(n: int, fractions: list[float]) -> list[int]:
    """Largest-remainder apportionment of ``n`` items over ``fractions``."""
    raw = [n * f for f in fractions]
    counts = [math.floor(x) for x in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _check_fractions(name: str, fractions: Mapping[str, float]) -> None:
    if not fractions:
        raise FixtureError(f"{name} is empty")
    if any(f < 0 for f in fractions.values()) or abs(math.fsum(fractions.values()) - 1.0) > 1e-9:
        raise FixtureError(f"{name} must be non-negative and sum to 1")


def _assign_groups_to_splits(group_sizes: list[int], fractions: Mapping[str, float], rng: random.Random) -> list[str]:
    splits = [s for s in SPLITS if fractions.get(s, 0.0) > 0]
    targets = {s: fractions[s] * sum(group_sizes) for s in splits}
    filled = {s: 0 for s in splits}
    order = list(range(len(group_sizes)))
    rng.shuffle(order)
    assignment = [""] * len(group_sizes)
    # seed every split with one group, then fill the split furthest below target
    for s, g in zip(splits, order):
        assignment[g] = s
        filled[s] += group_sizes[g]
    for g in order[len(splits):]:
        s = max(splits, key=lambda s: (targets[s] - filled[s], -splits.index(s)))
        assignment[g] = s
        filled[s] += group_sizes[g]
    return assignment


def _sample_time_in_bucket(rng: random.Random, where: GeoPoint, lo: float, hi: float, last: bool,
                           start: datetime, span_s: int) -> datetime:
    from .astro import solar_elevation

    for _ in range(10_000):
        ts = start + timedelta(seconds=rng.randrange(span_s))
        elev = solar_elevation(where, ts)
        if lo <= elev < hi or (last and elev == hi):
            return ts
    raise FixtureError(f"no timestamp found with sun elevation in [{lo}, {hi}) at {where}")


def generate_fixture(seed: int, params: FixtureParams = FixtureParams()) -> DatasetManifest:
    """Deterministic synthetic acquisition campaign.

    Records are grouped into acquisition sequences; each sequence sits at one
    place and belongs to a single split unless a ``LeakGroups`` violation moves
    some of its records. Labels follow ``class_fractions`` by exact quota.
    """
    p = params
    if p.n_records < 1:
        raise FixtureError("n_records must be positive")
    if not 1 <= p.n_groups <= p.n_records:
        raise FixtureError(f"n_groups={p.n_groups} infeasible for n_records={p.n_records}")
    _check_fractions("split_fractions", p.split_fractions)
    _check_fractions("class_fractions", p.class_fractions)
    unknown = set(p.split_fractions) - set(SPLITS)
    if unknown:
        raise FixtureError(f"unknown split {sorted(unknown)[0]!r}")
    active_splits = [s for s in SPLITS if p.split_fractions.get(s, 0.0) > 0]
    if p.n_groups < len(active_splits):
        raise FixtureError("need at least one group per non-empty split")

    rng = random.Random(seed)
    group_sizes = _quota(p.n_records, [1.0 / p.n_groups] * p.n_groups)
    group_split = _assign_groups_to_splits(group_sizes, p.split_fractions, rng)
    lat_min, lat_max, lon_min, lon_max = p.geo_box
    group_place = [
        (round(rng.uniform(lat_min, lat_max), 5), round(rng.uniform(lon_min, lon_max), 5))
        for _ in range(p.n_groups)
    ]

    class_shares = dict(p.class_fractions)
    for v in p.injected_violations:
        if isinstance(v, ClassSkew):
            if v.label not in class_shares:
                raise FixtureError(f"class skew on unknown label {v.label!r}")
            class_shares[v.label] *= v.factor
    total = sum(class_shares.values())
    labels_sorted = sorted(class_shares)
    label_counts = _quota(p.n_records, [class_shares[l] / total for l in labels_sorted])
    labels = [l for l, c in zip(labels_sorted, label_counts) for _ in range(c)]
    rng.shuffle(labels)

    start, end = p.time_range
    span_s = int((end - start).total_seconds())
    if span_s <= 0:
        raise FixtureError("empty time range")

    sun_buckets: list[int] | None = None
    if p.sun_elevation_mix is not None:
        edges, props = p.sun_elevation_mix
        if len(edges) != len(props) + 1:
            raise FixtureError("sun_elevation_mix needs one more edge than proportions")
        sun_buckets = [i for i, c in enumerate(_quota(p.n_records, list(props))) for _ in range(c)]
        rng.shuffle(sun_buckets)

    records: list[DatasetRecord] = []
    idx = 0
    width = len(str(p.n_records))
    for g, size in enumerate(group_sizes):
        lat0, lon0 = group_place[g]
        weather = p.weather[rng.randrange(len(p.weather))] if p.weather else None
        for _ in range(size):
            where = GeoPoint(
                max(-90.0, min(90.0, round(lat0 + rng.uniform(-0.01, 0.01), 5))),
                max(-180.0, min(180.0, round(lon0 + rng.uniform(-0.01, 0.01), 5))),
            )
            if sun_buckets is not None:
                edges = p.sun_elevation_mix[0]
                b = sun_buckets[idx]
                ts = _sample_time_in_bucket(rng, where, edges[b], edges[b + 1], b == len(edges) - 2, start, span_s)
            else:
                ts = start + timedelta(seconds=rng.randrange(span_s))
            meta: dict[str, Any] = {p.gps_field: where, p.time_field: ts}
            if p.camera_models:
                meta["camera_model"] = p.camera_models[rng.randrange(len(p.camera_models))]
            if weather is not None:
                meta["weather"] = weather
            records.append(
                DatasetRecord(
                    id=f"img-{idx:0{width}d}",
                    split=group_split[g],
                    group=f"seq-{g:03d}",
                    label=labels[idx],
                    meta=meta,
                )
            )
            idx += 1

    for v in p.injected_violations:
        if isinstance(v, LeakGroups):
            records = _inject_leaks(records, v.k, rng)
        elif isinstance(v, MissingField):
            records = _inject_edit(records, v.count, rng, lambda m: m.pop(v.field, None))
        elif isinstance(v, DisallowedValue):
            records = _inject_edit(records, v.count, rng, lambda m: m.__setitem__(v.field, v.value))
        elif not isinstance(v, ClassSkew):
            raise FixtureError(f"unknown violation {v!r}")

    return DatasetManifest.from_records(records, source_uri=f"fixture:seed={seed}")


def _inject_leaks(records: list[DatasetRecord], k: int, rng: random.Random) -> list[DatasetRecord]:
    if k == 0:
        return records
    by_group: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        by_group.setdefault(r.group, []).append(i)
    splits_present = sorted({r.split for r in records})
    candidates = sorted(g for g, idxs in by_group.items() if len(idxs) >= 2)
    if len(splits_present) < 2 or k > len(candidates):
        raise FixtureError(f"cannot leak {k} groups: {len(candidates)} multi-record groups, "
                           f"{len(splits_present)} splits")
    out = list(records)
    for g in sorted(rng.sample(candidates, k)):
        i = by_group[g][-1]
        rec = out[i]
        # prefer test as destination so the leak crosses into the evaluation split
        others = [s for s in ("test", "validation", "train") if s != rec.split and s in splits_present]
        out[i] = DatasetRecord(rec.id, others[0], rec.group, rec.label, dict(rec.meta))
    return out


def _inject_edit(records: list[DatasetRecord], count: int, rng: random.Random, edit) -> list[DatasetRecord]:
    if count > len(records):
        raise FixtureError(f"cannot alter {count} of {len(records)} records")
    out = list(records)
    for i in sorted(rng.sample(range(len(records)), count)):
        rec = out[i]
        meta = dict(rec.meta)
        edit(meta)
        out[i] = DatasetRecord(rec.id, rec.split, rec.group, rec.label, meta)
    return out
