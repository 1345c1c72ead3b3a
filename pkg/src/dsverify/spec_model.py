"""Requirement-specification documents and the recommendation catalog.

A requirement document (DRS) is a JSON file declaring constants, the metadata
schema every manifest record is expected to follow, the key features whose
distributions are controlled, and the verification requirements themselves.
Each requirement names one check kind and traces back to entries of the
generic recommendation catalog (DDS) and/or to upstream system requirements.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from json import decoder as _json_decoder
from json import scanner as _json_scanner
from pathlib import Path
from typing import Any, ClassVar, Iterator, Union

__all__ = [
    "CATALOG_ID_RE",
    "CHECK_KINDS",
    "ROLES",
    "VALUE_KINDS",
    "CatalogError",
    "ClassProportion",
    "DatasetSize",
    "DdsCatalog",
    "DdsEntry",
    "DrsDocument",
    "DrsParseError",
    "FeatureSpec",
    "FieldSource",
    "FieldSpec",
    "HistogramCompliance",
    "Manual",
    "MetadataConformity",
    "Requirement",
    "SessionHomogeneity",
    "SolarElevationSource",
    "SpecDiagnostic",
    "SplitIntegrity",
    "Trace",
    "default_catalog",
    "element_paths",
    "load_catalog",
    "parse_catalog",
    "parse_drs",
    "render_drs",
    "validate_drs",
]

CATALOG_ID_RE = re.compile(r"^(DEF|OBJ|REC)-\d+(\.\d+|-\d+)$")
IDENTIFIER_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
REQUIREMENT_ID_RE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.:-]*$")
_DERIVATION_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*\(\s*([A-Za-z_]\w*)\s*,\s*([A-Za-z_]\w*)\s*\)\s*$")

VALUE_KINDS = ("string", "number", "timestamp", "geopoint", "identifier")
FEATURE_KINDS = ("categorical", "binned-continuous")
ENTRY_KINDS = ("definition", "objective", "recommendation")
MODES = ("automatic", "manual")
ROLES = ("application_expert", "acquisition_system_expert", "machine_learning_expert")

SUM_TOLERANCE = 1e-9


# ---------------------------------------------------------------------------
# Recommendation catalog


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class DdsEntry:
    id: str
    kind: str
    text: str


@dataclass(frozen=True)
class DdsCatalog:
    entries: tuple[DdsEntry, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for entry in self.entries:
            if not CATALOG_ID_RE.match(entry.id):
                raise CatalogError(f"malformed catalog id {entry.id!r}")
            if entry.kind not in ENTRY_KINDS:
                raise CatalogError(f"{entry.id}: unknown entry kind {entry.kind!r}")
            if entry.id in seen:
                raise CatalogError(f"duplicate catalog id {entry.id!r}")
            seen.add(entry.id)

    def __contains__(self, entry_id: object) -> bool:
        return any(e.id == entry_id for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, entry_id: str) -> DdsEntry | None:
        for entry in self.entries:
            if entry.id == entry_id:
                return entry
        return None

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]


def parse_catalog(text: str) -> DdsCatalog:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CatalogError(f"{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, list):
        raise CatalogError("catalog must be a JSON array")
    entries = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or set(item) != {"id", "kind", "text"}:
            raise CatalogError(f"[{i}]: entry must be an object with keys id, kind, text")
        if not all(isinstance(item[k], str) for k in ("id", "kind", "text")):
            raise CatalogError(f"[{i}]: id, kind and text must be strings")
        entries.append(DdsEntry(item["id"], item["kind"], item["text"]))
    return DdsCatalog(tuple(entries))


def load_catalog(path: str | Path) -> DdsCatalog:
    return parse_catalog(Path(path).read_text(encoding="utf-8"))


def default_catalog() -> DdsCatalog:
    """The catalog bundled with the package."""
    text = resources.files("dsverify").joinpath("data/dds_catalog.json").read_text(encoding="utf-8")
    return parse_catalog(text)


# ---------------------------------------------------------------------------
# Document model


@dataclass(frozen=True)
class FieldSpec:
    name: str
    value_kind: str
    required: bool = True
    allowed_values: tuple[Any, ...] | None = None


@dataclass(frozen=True)
class FieldSource:
    """Feature read verbatim from one metadata field."""

    field: str

    def fields(self) -> tuple[str, ...]:
        return (self.field,)

    def render(self) -> str:
        return self.field


@dataclass(frozen=True)
class SolarElevationSource:
    """Feature derived as the sun elevation at a record's position and time."""

    gps_field: str
    time_field: str

    def fields(self) -> tuple[str, ...]:
        return (self.gps_field, self.time_field)

    def render(self) -> str:
        return f"solar_elevation({self.gps_field}, {self.time_field})"


FeatureSource = Union[FieldSource, SolarElevationSource]


@dataclass(frozen=True)
class FeatureSpec:
    """A controlled feature and its target distribution.

    Binned-continuous features carry bucket edges ``e0 < e1 < ... < ek``; value
    ``v`` falls in bucket ``i`` when ``e[i] <= v < e[i+1]``, and the last bucket
    is closed on the right. Categorical features carry a category list instead.
    ``target`` holds one proportion per bucket or category.
    """

    name: str
    source: FeatureSource
    kind: str
    target: tuple[float, ...]
    buckets: tuple[float, ...] = ()
    categories: tuple[str, ...] = ()

    @property
    def bucket_labels(self) -> list[str]:
        if self.kind == "categorical":
            return list(self.categories)
        edges = self.buckets
        labels = []
        for i in range(len(edges) - 1):
            closing = "]" if i == len(edges) - 2 else ")"
            labels.append(f"[{_fmt(edges[i])}, {_fmt(edges[i + 1])}{closing}")
        return labels

    def bucket_index(self, value: Any) -> int | None:
        """Index of the bucket holding ``value``, or None when it falls outside every bucket."""
        if self.kind == "categorical":
            try:
                return self.categories.index(str(value))
            except ValueError:
                return None
        if isinstance(value, bool) or not isinstance(value, (int, float)) or math.isnan(value):
            return None
        edges = self.buckets
        if not edges or value < edges[0] or value > edges[-1]:
            return None
        for i in range(len(edges) - 1):
            if value < edges[i + 1]:
                return i
        return len(edges) - 2


def _fmt(x: float) -> str:
    return f"{x:g}"


@dataclass(frozen=True)
class HistogramCompliance:
    kind: ClassVar[str] = "histogram_compliance"
    feature: str
    tolerance_const: str


@dataclass(frozen=True)
class ClassProportion:
    kind: ClassVar[str] = "class_proportion"
    target: tuple[tuple[str, float], ...]
    tolerance_const: str
    justification: str | None = None

    @property
    def target_map(self) -> dict[str, float]:
        return dict(self.target)


@dataclass(frozen=True)
class DatasetSize:
    kind: ClassVar[str] = "dataset_size"
    epsilon: float
    delta: float
    sigma_hat: float
    range: float


@dataclass(frozen=True)
class SplitIntegrity:
    kind: ClassVar[str] = "split_integrity"


@dataclass(frozen=True)
class MetadataConformity:
    kind: ClassVar[str] = "metadata_conformity"


@dataclass(frozen=True)
class SessionHomogeneity:
    kind: ClassVar[str] = "session_homogeneity"
    by: str
    alpha: float
    session_field: str = "group"


@dataclass(frozen=True)
class Manual:
    kind: ClassVar[str] = "manual"
    instructions: str
    required_role: str


CheckDescriptor = Union[
    HistogramCompliance,
    ClassProportion,
    DatasetSize,
    SplitIntegrity,
    MetadataConformity,
    SessionHomogeneity,
    Manual,
]
CHECK_KINDS = {
    cls.kind: cls
    for cls in (
        HistogramCompliance,
        ClassProportion,
        DatasetSize,
        SplitIntegrity,
        MetadataConformity,
        SessionHomogeneity,
        Manual,
    )
}


@dataclass(frozen=True)
class Trace:
    dds: tuple[str, ...] = ()
    system: tuple[str, ...] = ()


@dataclass(frozen=True)
class Requirement:
    id: str
    title: str
    mode: str
    check: CheckDescriptor
    trace: Trace = field(default_factory=Trace)
    derived: bool = False


@dataclass(frozen=True)
class DrsDocument:
    version: str
    constants: dict[str, float] = field(default_factory=dict)
    metadata_schema: tuple[FieldSpec, ...] = ()
    features: tuple[FeatureSpec, ...] = ()
    requirements: tuple[Requirement, ...] = ()

    def feature(self, name: str) -> FeatureSpec | None:
        for f in self.features:
            if f.name == name:
                return f
        return None

    def field_spec(self, name: str) -> FieldSpec | None:
        for f in self.metadata_schema:
            if f.name == name:
                return f
        return None

    def requirement(self, req_id: str) -> Requirement | None:
        for r in self.requirements:
            if r.id == req_id:
                return r
        return None


# ---------------------------------------------------------------------------
# Parsing


class DrsParseError(ValueError):
    """Fatal problem in a requirement document, located by line/column and element path."""

    def __init__(self, message: str, path: str = "", line: int = 0, column: int = 0):
        self.message = message
        self.path = path
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line else ""
        at = f"{path}: " if path else ""
        super().__init__(f"{where}{at}{message}")


class _Located(dict):
    pos: int = 0


class _LocatedList(list):
    pos: int = 0


class _LocatingDecoder(json.JSONDecoder):
    """JSON decoder that remembers the source offset of every object and array."""

    def __init__(self) -> None:
        super().__init__(object_pairs_hook=list)

        def parse_object(s_and_end, *args):
            pairs, end = _json_decoder.JSONObject(s_and_end, *args)
            obj = _Located()
            obj.pos = s_and_end[1] - 1
            for key, value in pairs:
                if key in obj:
                    raise _DuplicateKey(key, obj.pos)
                obj[key] = value
            return obj, end

        def parse_array(s_and_end, *args):
            values, end = _json_decoder.JSONArray(s_and_end, *args)
            arr = _LocatedList(values)
            arr.pos = s_and_end[1] - 1
            return arr, end

        self.parse_object = parse_object
        self.parse_array = parse_array
        self.scan_once = _json_scanner.py_make_scanner(self)


class _DuplicateKey(Exception):
    def __init__(self, key: str, pos: int):
        self.key = key
        self.pos = pos


def _line_col(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    col = pos - text.rfind("\n", 0, pos)
    return line, col


class _Parser:
    def __init__(self, text: str):
        self.text = text

    def error(self, node: Any, path: str, message: str) -> DrsParseError:
        pos = getattr(node, "pos", 0)
        line, col = _line_col(self.text, pos)
        return DrsParseError(message, path, line, col)

    def where(self, node: Any) -> str:
        line, col = _line_col(self.text, getattr(node, "pos", 0))
        return f"{line}:{col}"

    # typed accessors -------------------------------------------------------

    def obj(self, node: Any, path: str, required: set[str], optional: set[str] = frozenset()) -> _Located:
        if not isinstance(node, dict):
            raise self.error(node, path, f"expected an object, got {_kind_name(node)}")
        for key in node:
            if key not in required and key not in optional:
                raise self.error(node, f"{path}.{key}" if path else key, f"unknown key {key!r}")
        for key in sorted(required):
            if key not in node:
                raise self.error(node, path, f"missing key {key!r}")
        return node

    def arr(self, owner: Any, node: Any, path: str) -> list:
        if not isinstance(node, list):
            raise self.error(owner, path, f"expected an array, got {_kind_name(node)}")
        return node

    def string(self, owner: Any, node: Any, path: str, pattern: re.Pattern | None = None) -> str:
        if not isinstance(node, str):
            raise self.error(owner, path, f"expected a string, got {_kind_name(node)}")
        if pattern is not None and not pattern.match(node):
            raise self.error(owner, path, f"malformed identifier {node!r}")
        return node

    def number(self, owner: Any, node: Any, path: str) -> float:
        if isinstance(node, bool) or not isinstance(node, (int, float)):
            raise self.error(owner, path, f"expected a number, got {_kind_name(node)}")
        return float(node)

    def boolean(self, owner: Any, node: Any, path: str) -> bool:
        if not isinstance(node, bool):
            raise self.error(owner, path, f"expected a boolean, got {_kind_name(node)}")
        return node

    def choice(self, owner: Any, node: Any, path: str, options: tuple[str, ...]) -> str:
        value = self.string(owner, node, path)
        if value not in options:
            raise self.error(owner, path, f"{value!r} is not one of {', '.join(options)}")
        return value

    def numbers(self, owner: Any, node: Any, path: str) -> tuple[float, ...]:
        items = self.arr(owner, node, path)
        return tuple(self.number(items, v, f"{path}[{i}]") for i, v in enumerate(items))

    def strings(self, owner: Any, node: Any, path: str) -> tuple[str, ...]:
        items = self.arr(owner, node, path)
        return tuple(self.string(items, v, f"{path}[{i}]") for i, v in enumerate(items))

    # document sections ------------------------------------------------------

    def document(self, root: Any) -> DrsDocument:
        top = self.obj(
            root, "", {"drs_version"}, {"constants", "metadata_schema", "features", "requirements"}
        )
        version = self.string(top, top["drs_version"], "drs_version")

        constants: dict[str, float] = {}
        raw_consts = top.get("constants", {})
        if not isinstance(raw_consts, dict):
            raise self.error(top, "constants", f"expected an object, got {_kind_name(raw_consts)}")
        for name, value in raw_consts.items():
            if not IDENTIFIER_RE.match(name):
                raise self.error(raw_consts, f"constants.{name}", f"malformed constant name {name!r}")
            constants[name] = self.number(raw_consts, value, f"constants.{name}")

        schema = []
        seen_fields: dict[str, Any] = {}
        for i, node in enumerate(self.arr(top, top.get("metadata_schema", []), "metadata_schema")):
            spec = self.field_spec(node, f"metadata_schema[{i}]")
            if spec.name in seen_fields:
                raise self.error(
                    node,
                    f"metadata_schema[{i}]",
                    f"duplicate metadata field {spec.name!r} (first at {self.where(seen_fields[spec.name])})",
                )
            seen_fields[spec.name] = node
            schema.append(spec)

        features = []
        seen_features: dict[str, Any] = {}
        for i, node in enumerate(self.arr(top, top.get("features", []), "features")):
            spec = self.feature(node, f"features[{i}]")
            if spec.name in seen_features:
                raise self.error(
                    node,
                    f"features[{i}]",
                    f"duplicate feature {spec.name!r} (first at {self.where(seen_features[spec.name])})",
                )
            seen_features[spec.name] = node
            features.append(spec)

        requirements = []
        seen_reqs: dict[str, Any] = {}
        for i, node in enumerate(self.arr(top, top.get("requirements", []), "requirements")):
            req = self.requirement(node, f"requirements[{i}]")
            if req.id in seen_reqs:
                raise self.error(
                    node,
                    f"requirements[{i}].id",
                    f"duplicate requirement id {req.id!r} "
                    f"(first at {self.where(seen_reqs[req.id])}, again at {self.where(node)})",
                )
            seen_reqs[req.id] = node
            requirements.append(req)

        return DrsDocument(
            version=version,
            constants=constants,
            metadata_schema=tuple(schema),
            features=tuple(features),
            requirements=tuple(requirements),
        )

    def field_spec(self, node: Any, path: str) -> FieldSpec:
        o = self.obj(node, path, {"name", "value_kind"}, {"required", "allowed_values"})
        name = self.string(o, o["name"], f"{path}.name", IDENTIFIER_RE)
        kind = self.choice(o, o["value_kind"], f"{path}.value_kind", VALUE_KINDS)
        required = self.boolean(o, o.get("required", True), f"{path}.required")
        allowed = o.get("allowed_values")
        allowed_values = None
        if allowed is not None:
            items = self.arr(o, allowed, f"{path}.allowed_values")
            for j, v in enumerate(items):
                if isinstance(v, (dict, list)) or v is None or isinstance(v, bool):
                    raise self.error(items, f"{path}.allowed_values[{j}]", "allowed values must be strings or numbers")
            allowed_values = tuple(float(v) if isinstance(v, int) else v for v in items)
        return FieldSpec(name, kind, required, allowed_values)

    def feature(self, node: Any, path: str) -> FeatureSpec:
        o = self.obj(node, path, {"name", "source", "kind", "target"}, {"buckets", "categories"})
        name = self.string(o, o["name"], f"{path}.name", IDENTIFIER_RE)
        source = self.source(o, o["source"], f"{path}.source")
        kind = self.choice(o, o["kind"], f"{path}.kind", FEATURE_KINDS)
        target = self.numbers(o, o["target"], f"{path}.target")
        if kind == "binned-continuous":
            if "categories" in o:
                raise self.error(o, f"{path}.categories", "binned-continuous features take 'buckets', not 'categories'")
            if "buckets" not in o:
                raise self.error(o, path, "missing key 'buckets'")
            return FeatureSpec(name, source, kind, target, buckets=self.numbers(o, o["buckets"], f"{path}.buckets"))
        if "buckets" in o:
            raise self.error(o, f"{path}.buckets", "categorical features take 'categories', not 'buckets'")
        if "categories" not in o:
            raise self.error(o, path, "missing key 'categories'")
        return FeatureSpec(name, source, kind, target, categories=self.strings(o, o["categories"], f"{path}.categories"))

    def source(self, owner: Any, node: Any, path: str) -> FeatureSource:
        text = self.string(owner, node, path)
        m = _DERIVATION_RE.match(text)
        if m:
            func, a, b = m.groups()
            if func != "solar_elevation":
                raise self.error(owner, path, f"unknown derivation rule {func!r}")
            return SolarElevationSource(a, b)
        if IDENTIFIER_RE.match(text):
            return FieldSource(text)
        raise self.error(owner, path, f"malformed feature source {text!r}")

    def requirement(self, node: Any, path: str) -> Requirement:
        o = self.obj(node, path, {"id", "title", "mode", "check"}, {"trace", "derived"})
        req_id = self.string(o, o["id"], f"{path}.id", REQUIREMENT_ID_RE)
        title = self.string(o, o["title"], f"{path}.title")
        mode = self.choice(o, o["mode"], f"{path}.mode", MODES)
        check = self.check(o["check"], f"{path}.check")
        trace = Trace()
        if "trace" in o:
            t = self.obj(o["trace"], f"{path}.trace", set(), {"dds", "system"})
            trace = Trace(
                dds=self.strings(t, t.get("dds", []), f"{path}.trace.dds"),
                system=self.strings(t, t.get("system", []), f"{path}.trace.system"),
            )
        derived = self.boolean(o, o.get("derived", False), f"{path}.derived")
        return Requirement(req_id, title, mode, check, trace, derived)

    def check(self, node: Any, path: str) -> CheckDescriptor:
        if not isinstance(node, dict):
            raise self.error(node, path, f"expected an object, got {_kind_name(node)}")
        if "kind" not in node:
            raise self.error(node, path, "missing key 'kind'")
        kind = self.string(node, node["kind"], f"{path}.kind")
        if kind not in CHECK_KINDS:
            raise self.error(node, f"{path}.kind", f"unknown check kind {kind!r}")
        if kind == "histogram_compliance":
            o = self.obj(node, path, {"kind", "feature", "tolerance_const"})
            return HistogramCompliance(
                feature=self.string(o, o["feature"], f"{path}.feature"),
                tolerance_const=self.string(o, o["tolerance_const"], f"{path}.tolerance_const"),
            )
        if kind == "class_proportion":
            o = self.obj(node, path, {"kind", "target", "tolerance_const"}, {"justification"})
            raw = o["target"]
            if not isinstance(raw, dict):
                raise self.error(o, f"{path}.target", f"expected an object, got {_kind_name(raw)}")
            target = tuple((label, self.number(raw, v, f"{path}.target.{label}")) for label, v in raw.items())
            justification = o.get("justification")
            if justification is not None:
                justification = self.string(o, justification, f"{path}.justification")
            return ClassProportion(
                target=target,
                tolerance_const=self.string(o, o["tolerance_const"], f"{path}.tolerance_const"),
                justification=justification,
            )
        if kind == "dataset_size":
            o = self.obj(node, path, {"kind", "epsilon", "delta", "sigma_hat", "range"})
            return DatasetSize(
                *(self.number(o, o[k], f"{path}.{k}") for k in ("epsilon", "delta", "sigma_hat", "range"))
            )
        if kind == "split_integrity":
            self.obj(node, path, {"kind"})
            return SplitIntegrity()
        if kind == "metadata_conformity":
            self.obj(node, path, {"kind"})
            return MetadataConformity()
        if kind == "session_homogeneity":
            o = self.obj(node, path, {"kind", "by", "alpha"}, {"session_field"})
            return SessionHomogeneity(
                by=self.string(o, o["by"], f"{path}.by", IDENTIFIER_RE),
                alpha=self.number(o, o["alpha"], f"{path}.alpha"),
                session_field=self.string(o, o.get("session_field", "group"), f"{path}.session_field", IDENTIFIER_RE),
            )
        o = self.obj(node, path, {"kind", "instructions", "required_role"})
        return Manual(
            instructions=self.string(o, o["instructions"], f"{path}.instructions"),
            required_role=self.choice(o, o["required_role"], f"{path}.required_role", ROLES),
        )


def _kind_name(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "array"
    return "object"


def parse_drs(text: str) -> DrsDocument:
    """Parse a requirement document from JSON text.

    Raises DrsParseError (with line, column and element path) on syntax errors,
    unknown keys or check kinds, wrongly typed values and duplicate ids.
    """
    try:
        root = _LocatingDecoder().decode(text)
    except json.JSONDecodeError as exc:
        raise DrsParseError(exc.msg, "", exc.lineno, exc.colno) from None
    except _DuplicateKey as exc:
        line, col = _line_col(text, exc.pos)
        raise DrsParseError(f"duplicate key {exc.key!r}", "", line, col) from None
    return _Parser(text).document(root)


# ---------------------------------------------------------------------------
# Rendering


def _check_to_json(check: CheckDescriptor) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": check.kind}
    if isinstance(check, HistogramCompliance):
        out.update(feature=check.feature, tolerance_const=check.tolerance_const)
    elif isinstance(check, ClassProportion):
        out.update(target=dict(check.target), tolerance_const=check.tolerance_const)
        if check.justification is not None:
            out["justification"] = check.justification
    elif isinstance(check, DatasetSize):
        out.update(epsilon=check.epsilon, delta=check.delta, sigma_hat=check.sigma_hat, range=check.range)
    elif isinstance(check, SessionHomogeneity):
        out.update(by=check.by, alpha=check.alpha, session_field=check.session_field)
    elif isinstance(check, Manual):
        out.update(instructions=check.instructions, required_role=check.required_role)
    return out


def drs_to_json(doc: DrsDocument) -> dict[str, Any]:
    schema = []
    for f in doc.metadata_schema:
        item: dict[str, Any] = {"name": f.name, "value_kind": f.value_kind, "required": f.required}
        if f.allowed_values is not None:
            item["allowed_values"] = list(f.allowed_values)
        schema.append(item)
    features = []
    for f in doc.features:
        item = {"name": f.name, "source": f.source.render(), "kind": f.kind}
        if f.kind == "categorical":
            item["categories"] = list(f.categories)
        else:
            item["buckets"] = list(f.buckets)
        item["target"] = list(f.target)
        features.append(item)
    requirements = [
        {
            "id": r.id,
            "title": r.title,
            "mode": r.mode,
            "check": _check_to_json(r.check),
            "trace": {"dds": list(r.trace.dds), "system": list(r.trace.system)},
            "derived": r.derived,
        }
        for r in doc.requirements
    ]
    return {
        "drs_version": doc.version,
        "constants": dict(doc.constants),
        "metadata_schema": schema,
        "features": features,
        "requirements": requirements,
    }


def render_drs(doc: DrsDocument) -> str:
    """Canonical JSON rendering; ``parse_drs(render_drs(d)) == d``."""
    return json.dumps(drs_to_json(doc), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True, order=True)
class SpecDiagnostic:
    path: str
    severity: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.path}: {self.message}"


def _fmt_sum(x: float) -> str:
    return f"{x:.10g}"


def _check_distribution(path: str, values: tuple[float, ...] | list[float]) -> Iterator[SpecDiagnostic]:
    for i, p in enumerate(values):
        if not 0.0 <= p <= 1.0:
            yield SpecDiagnostic(f"{path}[{i}]", "error", f"proportion {p:g} outside [0, 1]")
    total = math.fsum(values)
    if abs(total - 1.0) > SUM_TOLERANCE:
        yield SpecDiagnostic(path, "error", f"distribution sums to {_fmt_sum(total)}")


def _validate_feature(doc: DrsDocument, f: FeatureSpec) -> Iterator[SpecDiagnostic]:
    base = f"features[{f.name}]"
    for fname in f.source.fields():
        fs = doc.field_spec(fname)
        if fs is None:
            yield SpecDiagnostic(f"{base}.source", "error", f"undeclared metadata field {fname!r}")
    if isinstance(f.source, SolarElevationSource):
        gps = doc.field_spec(f.source.gps_field)
        when = doc.field_spec(f.source.time_field)
        if gps is not None and gps.value_kind != "geopoint":
            yield SpecDiagnostic(f"{base}.source", "error", f"field {gps.name!r} is not a geopoint")
        if when is not None and when.value_kind != "timestamp":
            yield SpecDiagnostic(f"{base}.source", "error", f"field {when.name!r} is not a timestamp")
        if f.kind != "binned-continuous":
            yield SpecDiagnostic(f"{base}.kind", "error", "solar elevation is continuous; use binned-continuous")
    if f.kind == "binned-continuous":
        edges = f.buckets
        if len(edges) < 2:
            yield SpecDiagnostic(f"{base}.buckets", "error", "at least two bucket edges required")
        elif any(b <= a for a, b in zip(edges, edges[1:])):
            yield SpecDiagnostic(f"{base}.buckets", "error", "bucket edges must be strictly increasing")
        n_bins = max(len(edges) - 1, 0)
    else:
        if not f.categories:
            yield SpecDiagnostic(f"{base}.categories", "error", "at least one category required")
        if len(set(f.categories)) != len(f.categories):
            yield SpecDiagnostic(f"{base}.categories", "error", "categories must be unique")
        n_bins = len(f.categories)
    if len(f.target) != n_bins:
        yield SpecDiagnostic(
            f"{base}.target", "error", f"target has {len(f.target)} proportions for {n_bins} buckets"
        )
    yield from _check_distribution(f"{base}.target", f.target)


def _validate_tolerance(doc: DrsDocument, base: str, name: str) -> Iterator[SpecDiagnostic]:
    if name not in doc.constants:
        yield SpecDiagnostic(f"{base}.check.tolerance_const", "error", f"undefined constant {name!r}")
        return
    value = doc.constants[name]
    if not 0.0 < value <= 1.0:
        yield SpecDiagnostic(f"constants.{name}", "error", f"tolerance {value:g} outside (0, 1]")


def _validate_requirement(doc: DrsDocument, catalog: DdsCatalog, r: Requirement) -> Iterator[SpecDiagnostic]:
    base = f"requirements[{r.id}]"
    check = r.check
    if (r.mode == "manual") != isinstance(check, Manual):
        yield SpecDiagnostic(f"{base}.mode", "error", f"{r.mode} requirement cannot carry a {check.kind} check")
    for i, ref in enumerate(r.trace.dds):
        if ref not in catalog:
            yield SpecDiagnostic(f"{base}.trace.dds[{i}]", "error", f"dangling DDS reference {ref!r}")
    if not r.trace.dds and not r.trace.system:
        yield SpecDiagnostic(base, "warning", "requirement has no trace links")
    if r.derived and r.trace.system:
        yield SpecDiagnostic(f"{base}.derived", "warning", "derived requirement also traces to system requirements")
    if not r.derived and not r.trace.system and r.trace.dds:
        yield SpecDiagnostic(f"{base}.derived", "warning", "requirement traces only to the DDS but is not marked derived")

    if isinstance(check, HistogramCompliance):
        if doc.feature(check.feature) is None:
            yield SpecDiagnostic(f"{base}.check.feature", "error", f"undefined feature {check.feature!r}")
        yield from _validate_tolerance(doc, base, check.tolerance_const)
    elif isinstance(check, ClassProportion):
        yield from _validate_tolerance(doc, base, check.tolerance_const)
        if not check.target:
            yield SpecDiagnostic(f"{base}.check.target", "error", "class target is empty")
        else:
            yield from _check_distribution(f"{base}.check.target", [p for _, p in check.target])
    elif isinstance(check, DatasetSize):
        if not check.epsilon > 0:
            yield SpecDiagnostic(f"{base}.check.epsilon", "error", "epsilon must be positive")
        if not 0 < check.delta < 1:
            yield SpecDiagnostic(f"{base}.check.delta", "error", "delta must lie in (0, 1)")
        if not check.sigma_hat >= 0:
            yield SpecDiagnostic(f"{base}.check.sigma_hat", "error", "sigma_hat must be non-negative")
        if not check.range > 0:
            yield SpecDiagnostic(f"{base}.check.range", "error", "range must be positive")
    elif isinstance(check, SessionHomogeneity):
        if not 0 < check.alpha < 1:
            yield SpecDiagnostic(f"{base}.check.alpha", "error", "alpha must lie in (0, 1)")
        if check.by != "label" and doc.feature(check.by) is None:
            yield SpecDiagnostic(f"{base}.check.by", "error", f"undefined feature {check.by!r}")
        if check.session_field != "group" and doc.field_spec(check.session_field) is None:
            yield SpecDiagnostic(
                f"{base}.check.session_field", "error", f"undeclared metadata field {check.session_field!r}"
            )
    elif isinstance(check, MetadataConformity):
        if not doc.metadata_schema:
            yield SpecDiagnostic(f"{base}.check", "error", "metadata conformity needs a non-empty metadata_schema")


def validate_drs(doc: DrsDocument, catalog: DdsCatalog) -> list[SpecDiagnostic]:
    """Semantic checks on a parsed document; empty result means the document is valid.

    Diagnostics are sorted by element path, so the result does not depend on
    requirement declaration order.
    """
    diags: list[SpecDiagnostic] = []
    for f in doc.features:
        diags.extend(_validate_feature(doc, f))
    for f in doc.metadata_schema:
        if f.allowed_values is not None and f.value_kind in ("geopoint", "timestamp"):
            diags.append(
                SpecDiagnostic(f"metadata_schema[{f.name}].allowed_values", "warning",
                               f"allowed_values is ignored for {f.value_kind} fields")
            )
    for r in doc.requirements:
        diags.extend(_validate_requirement(doc, catalog, r))
    return sorted(set(diags))


def element_paths(doc: DrsDocument) -> set[str]:
    """Every element path a diagnostic may point at."""
    paths = {"constants", "metadata_schema", "features", "requirements"}
    paths.update(f"constants.{k}" for k in doc.constants)
    for f in doc.metadata_schema:
        base = f"metadata_schema[{f.name}]"
        paths.update({base, f"{base}.allowed_values"})
    for f in doc.features:
        base = f"features[{f.name}]"
        paths.update({base, f"{base}.source", f"{base}.kind", f"{base}.buckets", f"{base}.categories", f"{base}.target"})
        paths.update(f"{base}.target[{i}]" for i in range(len(f.target)))
    for r in doc.requirements:
        base = f"requirements[{r.id}]"
        paths.update({base, f"{base}.mode", f"{base}.derived", f"{base}.check"})
        paths.update(f"{base}.trace.dds[{i}]" for i in range(len(r.trace.dds)))
        paths.update(f"{base}.check.{k}" for k in _check_to_json(r.check))
        if isinstance(r.check, ClassProportion):
            paths.update(f"{base}.check.target[{i}]" for i in range(len(r.check.target)))
    return paths
