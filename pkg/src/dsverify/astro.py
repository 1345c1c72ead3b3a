"""Solar geometry for geo-temporal features.

Low-accuracy Meeus series as used by the NOAA solar calculator: mean
longitude and anomaly in Julian centuries from J2000 give the sun's apparent
longitude, hence declination and equation of time; true solar time follows
from UTC clock time and longitude, and elevation from the hour-angle formula.
Elevation is geometric (no refraction); TT-UTC is ignored. Accuracy is a few
hundredths of a degree over 1900-2100, far below any elevation bucket width.
"""

from __future__ import annotations

import calendar
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any

from .manifest import DatasetManifest, GeoPoint
from .spec_model import FeatureSpec, FieldSource, SolarElevationSource

__all__ = [
    "AstroRangeError",
    "DerivationError",
    "SolarState",
    "Unresolvable",
    "derive_feature",
    "julian_day",
    "solar_elevation",
    "solar_state",
]

UNIX_EPOCH_JD = 2440587.5
MIN_YEAR, MAX_YEAR = 1900, 2100


class AstroRangeError(ValueError):
    pass


class DerivationError(ValueError):
    pass


@dataclass(frozen=True)
class SolarState:
    julian_day: float
    declination: float  # degrees
    equation_of_time: float  # minutes
    hour_angle: float  # degrees, negative before solar noon
    elevation: float  # degrees


def _utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        raise ValueError("timestamp must be timezone-aware UTC")
    ts = ts.astimezone(timezone.utc)
    if not MIN_YEAR <= ts.year <= MAX_YEAR:
        raise AstroRangeError(f"year {ts.year} outside supported range {MIN_YEAR}-{MAX_YEAR}")
    return ts


def julian_day(ts: datetime) -> float:
    """Continuous Julian Day of a UTC instant (2000-01-01T12:00Z -> 2451545.0)."""
    ts = _utc(ts)
    seconds = calendar.timegm(ts.utctimetuple()) + ts.microsecond / 1e6
    return UNIX_EPOCH_JD + seconds / 86400.0


def solar_state(location: GeoPoint, ts: datetime) -> SolarState:
    ts = _utc(ts)
    jd = julian_day(ts)
    t = (jd - 2451545.0) / 36525.0  # Julian centuries since J2000

    mean_long = (280.46646 + t * (36000.76983 + t * 0.0003032)) % 360.0
    mean_anom = math.radians(357.52911 + t * (35999.05029 - 0.0001537 * t))
    ecc = 0.016708634 - t * (0.000042037 + 0.0000001267 * t)
    center = (
        math.sin(mean_anom) * (1.914602 - t * (0.004817 + 0.000014 * t))
        + math.sin(2 * mean_anom) * (0.019993 - 0.000101 * t)
        + math.sin(3 * mean_anom) * 0.000289
    )
    omega = math.radians(125.04 - 1934.136 * t)
    apparent_long = math.radians(mean_long + center - 0.00569 - 0.00478 * math.sin(omega))
    mean_obliq = 23.0 + (26.0 + (21.448 - t * (46.815 + t * (0.00059 - t * 0.001813))) / 60.0) / 60.0
    obliq = math.radians(mean_obliq + 0.00256 * math.cos(omega))

    decl = math.asin(math.sin(obliq) * math.sin(apparent_long))

    y = math.tan(obliq / 2.0) ** 2
    l0 = math.radians(mean_long)
    eot = 4.0 * math.degrees(
        y * math.sin(2 * l0)
        - 2 * ecc * math.sin(mean_anom)
        + 4 * ecc * y * math.sin(mean_anom) * math.cos(2 * l0)
        - 0.5 * y * y * math.sin(4 * l0)
        - 1.25 * ecc * ecc * math.sin(2 * mean_anom)
    )

    minutes = ts.hour * 60.0 + ts.minute + (ts.second + ts.microsecond / 1e6) / 60.0
    true_solar_minutes = minutes + eot + 4.0 * location.lon
    hour_angle = (true_solar_minutes / 4.0) % 360.0 - 180.0

    phi = math.radians(location.lat)
    h = math.radians(hour_angle)
    sin_elev = math.sin(phi) * math.sin(decl) + math.cos(phi) * math.cos(decl) * math.cos(h)
    elevation = math.degrees(math.asin(max(-1.0, min(1.0, sin_elev))))

    return SolarState(
        julian_day=jd,
        declination=math.degrees(decl),
        equation_of_time=eot,
        hour_angle=hour_angle,
        elevation=elevation,
    )


def solar_elevation(location: GeoPoint, ts: datetime) -> float:
    """Geometric sun elevation in degrees, in [-90, 90]."""
    return solar_state(location, ts).elevation


@dataclass(frozen=True)
class Unresolvable:
    record_id: str
    reason: str


def derive_feature(
    manifest: DatasetManifest, feature: FeatureSpec, schema_fields: set[str] | None = None
) -> tuple[list[tuple[str, Any]], list[Unresolvable]]:
    """Evaluate a feature on every record.

    Returns ``(values, unresolvable)`` where ``values`` pairs record ids with
    feature values and ``unresolvable`` lists records lacking a usable source
    field. When ``schema_fields`` is given, a source field outside it is a
    specification error and raises DerivationError.
    """
    fields = feature.source.fields()
    if schema_fields is not None:
        undeclared = [f for f in fields if f not in schema_fields]
        if undeclared:
            raise DerivationError(f"feature {feature.name!r} uses undeclared metadata field {undeclared[0]!r}")

    values: list[tuple[str, Any]] = []
    bad: list[Unresolvable] = []
    for rec in manifest.records:
        missing = [f for f in fields if f not in rec.meta]
        if missing:
            bad.append(Unresolvable(rec.id, f"missing field {missing[0]}"))
            continue
        src = feature.source
        if isinstance(src, FieldSource):
            values.append((rec.id, rec.meta[src.field]))
            continue
        assert isinstance(src, SolarElevationSource)
        where, when = rec.meta[src.gps_field], rec.meta[src.time_field]
        if not isinstance(where, GeoPoint):
            bad.append(Unresolvable(rec.id, f"invalid geopoint in {src.gps_field}"))
            continue
        if not isinstance(when, datetime):
            bad.append(Unresolvable(rec.id, f"invalid timestamp in {src.time_field}"))
            continue
        try:
            values.append((rec.id, solar_elevation(where, when)))
        except AstroRangeError as exc:
            bad.append(Unresolvable(rec.id, str(exc)))
    return values, bad
