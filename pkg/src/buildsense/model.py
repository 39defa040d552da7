"""Canonical domain types shared by every other module.

Everything that crosses a wire in this platform is UTF-8 JSON using the
``acp_*`` field vocabulary (``acp_id``, ``acp_ts``, ``acp_location``, ...),
so the pydantic models here double as the wire schema. Timestamps are
microsecond integers internally and decimal strings with exactly six
fractional digits on the wire.
"""

from __future__ import annotations

import hashlib
import json
import math
import operator
import re
import time
from dataclasses import dataclass
from datetime import date, datetime, timezone
from typing import Any, Callable, Iterable, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_core import core_schema

MICROS = 1_000_000

_WIRE_TS_RE = re.compile(r"^\d+(\.\d{1,6})?$")


class ModelError(ValueError):
    """Raised for malformed wire input; the message names the offending field."""


# ---------------------------------------------------------------------------
# Timestamps
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Timestamp:
    """UTC instant, microseconds since the epoch.

    Wire form is a decimal string of epoch seconds with exactly six
    fractional digits (``"1589469979.861816"``); parse/format round-trips
    such strings bit-exactly.
    """

    micros: int

    def __post_init__(self) -> None:
        if self.micros < 0:
            raise ModelError("acp_ts: must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "Timestamp":
        if not _WIRE_TS_RE.match(text):
            raise ModelError(f"acp_ts: malformed timestamp {text!r}")
        if "." in text:
            secs, frac = text.split(".")
            frac = frac.ljust(6, "0")
        else:
            secs, frac = text, "000000"
        return cls(int(secs) * MICROS + int(frac))

    @classmethod
    def coerce(cls, value: Any) -> "Timestamp":
        """Accept a Timestamp, wire string, or numeric epoch seconds."""
        if isinstance(value, Timestamp):
            return value
        if isinstance(value, str):
            return cls.parse(value)
        if isinstance(value, bool):
            raise ModelError(f"acp_ts: cannot interpret {value!r}")
        if isinstance(value, int):
            return cls(value * MICROS)
        if isinstance(value, float):
            return cls(round(value * MICROS))
        raise ModelError(f"acp_ts: cannot interpret {value!r}")

    @classmethod
    def now(cls) -> "Timestamp":
        return cls(time.time_ns() // 1000)

    @classmethod
    def from_seconds(cls, seconds: float) -> "Timestamp":
        return cls(round(seconds * MICROS))

    def wire(self) -> str:
        return f"{self.micros // MICROS}.{self.micros % MICROS:06d}"

    def seconds(self) -> float:
        return self.micros / MICROS

    def date_utc(self) -> date:
        return datetime.fromtimestamp(self.micros // MICROS, tz=timezone.utc).date()

    def plus_micros(self, delta: int) -> "Timestamp":
        return Timestamp(self.micros + delta)

    def __str__(self) -> str:  # pragma: no cover - debugging aid
        return self.wire()

    @classmethod
    def __get_pydantic_core_schema__(cls, source_type: Any, handler: Any) -> Any:
        return core_schema.no_info_plain_validator_function(
            cls.coerce,
            serialization=core_schema.plain_serializer_function_ser_schema(
                lambda t: t.wire(), return_schema=core_schema.str_schema()
            ),
        )


def seconds_to_micros(ttl_s: float) -> int:
    return round(ttl_s * MICROS)


@dataclass(frozen=True)
class TimelinessInterval:
    """Closed interval [start, start + ttl] during which an event is actionable."""

    start: Timestamp
    ttl_micros: int

    def __post_init__(self) -> None:
        if self.ttl_micros <= 0:
            raise ModelError("ttl_s: must be positive")

    @property
    def end(self) -> Timestamp:
        return self.start.plus_micros(self.ttl_micros)

    @property
    def ttl_s(self) -> float:
        return self.ttl_micros / MICROS

    def contains(self, ts: Timestamp) -> bool:
        return self.start.micros <= ts.micros <= self.end.micros

    def overlaps(self, other: "TimelinessInterval") -> bool:
        return self.start.micros <= other.end.micros and other.start.micros <= self.end.micros

    @classmethod
    def coerce(cls, value: Any) -> "TimelinessInterval":
        if isinstance(value, TimelinessInterval):
            return value
        if isinstance(value, dict):
            try:
                start = Timestamp.coerce(value["start"])
                ttl = value["ttl_s"]
            except KeyError as exc:
                raise ModelError(f"timeliness: missing {exc.args[0]!r}") from exc
            return cls(start, seconds_to_micros(float(ttl)))
        raise ModelError(f"timeliness: cannot interpret {value!r}")

    @classmethod
    def __get_pydantic_core_schema__(cls, source_type: Any, handler: Any) -> Any:
        return core_schema.no_info_plain_validator_function(
            cls.coerce,
            serialization=core_schema.plain_serializer_function_ser_schema(
                lambda t: {"start": t.start.wire(), "ttl_s": t.ttl_micros / MICROS},
                return_schema=core_schema.dict_schema(),
            ),
        )


def timeliness_of(event_time: Timestamp, ttl_s: float) -> TimelinessInterval:
    """Interval [t, t + ttl] in which acting on the event is still relevant."""
    if ttl_s <= 0:
        raise ModelError("ttl_s: must be positive")
    return TimelinessInterval(event_time, seconds_to_micros(ttl_s))


# ---------------------------------------------------------------------------
# Locations and boundaries
# ---------------------------------------------------------------------------

GPS_SYSTEM = "GPS"


class LocationRef(BaseModel):
    """Either a GPS position or in-building coordinates, never both.

    ``system == "GPS"`` selects lat/lng/alt; any other system name is a
    building-local frame with x/y, floor index ``f`` and in-floor height
    ``zf``. Input field ``z`` is accepted as an alias for ``zf`` and never
    emitted. ``parent_crate_id`` ties the location into the crate hierarchy.
    """

    model_config = ConfigDict(populate_by_name=True)

    system: str
    acp_lat: Optional[float] = None
    acp_lng: Optional[float] = None
    acp_alt: Optional[float] = None
    x: Optional[float] = None
    y: Optional[float] = None
    f: Optional[int] = None
    zf: Optional[float] = None
    parent_crate_id: Optional[str] = None

    @model_validator(mode="before")
    @classmethod
    def _accept_z_alias(cls, data: Any) -> Any:
        if isinstance(data, dict) and "z" in data:
            data = dict(data)
            z = data.pop("z")
            data.setdefault("zf", z)
        return data

    @model_validator(mode="after")
    def _one_variant(self) -> "LocationRef":
        if not self.system:
            raise ModelError("acp_location.system: required")
        if self.is_gps:
            if self.acp_lat is None or self.acp_lng is None:
                raise ModelError("acp_location: GPS locations need acp_lat and acp_lng")
            if not (-90.0 <= self.acp_lat <= 90.0):
                raise ModelError("acp_location.acp_lat: outside [-90, 90]")
            if not (-180.0 <= self.acp_lng <= 180.0):
                raise ModelError("acp_location.acp_lng: outside [-180, 180]")
            if any(v is not None for v in (self.x, self.y, self.f, self.zf)):
                raise ModelError("acp_location: GPS variant must not carry x/y/f/zf")
        else:
            if self.x is None or self.y is None or self.f is None:
                raise ModelError("acp_location: in-building locations need x, y and f")
            if self.zf is None:
                self.zf = 0.0
            if any(v is not None for v in (self.acp_lat, self.acp_lng, self.acp_alt)):
                raise ModelError("acp_location: in-building variant must not carry GPS fields")
        return self

    @property
    def is_gps(self) -> bool:
        return self.system == GPS_SYSTEM

    def wire_doc(self) -> dict:
        return self.model_dump(exclude_none=True)


class BoundaryPolygon(BaseModel):
    """Perimeter polygon in a named coordinate system.

    The first point is not repeated; closure is implicit. Parsing is
    lenient about degenerate shapes so that validation can report them
    instead of refusing to construct the record (see ``validate_crate``).
    """

    system: str = ""
    boundary: list[tuple[float, float]]

    @model_validator(mode="before")
    @classmethod
    def _accept_loose_forms(cls, data: Any) -> Any:
        # Bare point lists and embedded JSON strings both occur in the wild.
        if isinstance(data, str):
            try:
                data = json.loads(data)
            except json.JSONDecodeError as exc:
                raise ModelError("acp_boundary: not valid JSON") from exc
        if isinstance(data, list):
            data = {"boundary": data}
        return data

    @field_validator("boundary")
    @classmethod
    def _finite_points(cls, pts: list[tuple[float, float]]) -> list[tuple[float, float]]:
        for x, y in pts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ModelError("acp_boundary: points must be finite")
        return pts

    def area(self) -> float:
        pts = self.boundary
        if len(pts) < 3:
            return 0.0
        acc = 0.0
        for i, (x1, y1) in enumerate(pts):
            x2, y2 = pts[(i + 1) % len(pts)]
            acc += x1 * y2 - x2 * y1
        return abs(acc) / 2.0

    def is_degenerate(self) -> bool:
        return len(self.boundary) < 3 or self.area() == 0.0

    def wire_doc(self) -> dict:
        return {"system": self.system, "boundary": [list(p) for p in self.boundary]}


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

WELL_KNOWN_CRATE_TYPES = ("site", "building", "floor", "room")

MAX_PARENT_HOPS = 32


class CrateRecord(BaseModel):
    """A node in the building hierarchy: site, building, floor or room.

    ``crate_type`` is open-ended; the four well-known values above are what
    the bundled tooling understands. ``parent_crate_id`` of ``None`` marks a
    hierarchy root.
    """

    model_config = ConfigDict(populate_by_name=True)

    crate_id: str
    parent_crate_id: Optional[str] = None
    crate_type: str
    long_name: str = Field(default="", alias="long-name")
    description: str = ""
    acp_location: LocationRef
    acp_boundary: BoundaryPolygon
    acp_ts: Optional[Timestamp] = None

    @model_validator(mode="after")
    def _inherit_boundary_system(self) -> "CrateRecord":
        if not self.acp_boundary.system:
            self.acp_boundary.system = self.acp_location.system
        return self

    @property
    def floor_number(self) -> Optional[int]:
        return self.acp_location.f

    def wire_doc(self) -> dict:
        doc = self.model_dump(by_alias=True, exclude_none=True)
        doc["acp_boundary"] = self.acp_boundary.wire_doc()
        doc["acp_location"] = self.acp_location.wire_doc()
        return doc


class SensorMetadataRecord(BaseModel):
    """Static per-sensor metadata: identity, type, features and placement."""

    model_config = ConfigDict(populate_by_name=True)

    acp_id: str
    acp_type: str = ""
    owner: str = ""
    source: str = ""
    features: list[str]
    acp_location: LocationRef
    acp_ts: Optional[Timestamp] = None

    @model_validator(mode="before")
    @classmethod
    def _legacy_fields(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            if "acp_type" not in data and "type" in data:
                data["acp_type"] = data.pop("type")
            feats = data.get("features")
            if isinstance(feats, str):
                data["features"] = [p.strip() for p in feats.split(",") if p.strip()]
        return data

    @field_validator("features")
    @classmethod
    def _non_empty(cls, feats: list[str]) -> list[str]:
        if not feats:
            raise ModelError("features: must not be empty")
        return feats

    @property
    def parent_crate_id(self) -> Optional[str]:
        return self.acp_location.parent_crate_id

    def wire_doc(self) -> dict:
        doc = self.model_dump(exclude_none=True)
        doc["acp_location"] = self.acp_location.wire_doc()
        return doc


FeatureValue = Union[int, float]


class SensorReading(BaseModel):
    """One timestamped feature map from one sensor; the unit of pipeline flow.

    Enrichment copies ``acp_type``/``acp_location``/``parent_crate_id`` from
    the sensor metadata so the record is self-contained downstream. Readings
    may also carry sensor-raised event fields (``acp_event`` and friends) for
    interrupt-style devices.
    """

    acp_id: str
    acp_ts: Timestamp
    features: dict[str, FeatureValue]
    acp_type: Optional[str] = None
    acp_location: Optional[LocationRef] = None
    parent_crate_id: Optional[str] = None
    acp_event: Optional[str] = None
    acp_event_value: Optional[Union[str, int, float]] = None
    acp_confidence: Optional[float] = None
    unregistered: bool = Field(default=False, exclude=True)

    @field_validator("features", mode="before")
    @classmethod
    def _numeric_only(cls, feats: Any) -> Any:
        # Vendor payloads mix metadata strings (e.g. device names) into the
        # feature map; only numeric entries are features.
        if isinstance(feats, dict):
            feats = {
                k: v for k, v in feats.items()
                if isinstance(v, (int, float)) and not isinstance(v, bool)
            }
        return feats

    @field_validator("features")
    @classmethod
    def _non_empty(cls, feats: dict[str, FeatureValue]) -> dict[str, FeatureValue]:
        if not feats:
            raise ModelError("features: must not be empty")
        return feats

    @property
    def enriched(self) -> bool:
        return self.acp_type is not None or self.unregistered

    def wire_doc(self) -> dict:
        doc = self.model_dump(exclude_none=True)
        if self.acp_location is not None:
            doc["acp_location"] = self.acp_location.wire_doc()
        return doc


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------

class SimpleEvent(BaseModel):
    """Threshold or interrupt detection from a single reading."""

    event_id: str
    acp_id: str
    acp_ts: Timestamp
    acp_event: str
    acp_event_value: Optional[Union[str, int, float]] = None
    acp_confidence: float = 1.0
    timeliness: TimelinessInterval
    acp_type: Optional[str] = None
    parent_crate_id: Optional[str] = None
    # Feature snapshot of the triggering reading, used for rule/filter
    # evaluation only; never serialized.
    features: Optional[dict[str, FeatureValue]] = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def _consistent(self) -> "SimpleEvent":
        if not (0.0 <= self.acp_confidence <= 1.0):
            raise ModelError("acp_confidence: outside [0, 1]")
        if self.timeliness.start != self.acp_ts:
            raise ModelError("timeliness: must start at acp_ts")
        return self

    def wire_doc(self) -> dict:
        return self.model_dump(exclude_none=True)


class DerivedEvent(BaseModel):
    """Sequence detection over simple events whose timeliness windows chain."""

    event_id: str
    rule_id: str
    acp_event: str
    acp_event_value: Optional[Union[str, int, float]] = None
    acp_ts: Timestamp
    acp_confidence: float
    constituents: list[str]
    timeliness: TimelinessInterval

    @model_validator(mode="after")
    def _confidence_range(self) -> "DerivedEvent":
        if not (0.0 <= self.acp_confidence <= 1.0):
            raise ModelError("acp_confidence: outside [0, 1]")
        return self

    def wire_doc(self) -> dict:
        return self.model_dump(exclude_none=True)

    def signature(self) -> tuple:
        """Identity tuple for engine/oracle equivalence comparisons."""
        return (
            self.rule_id,
            self.acp_event,
            tuple(self.constituents),
            self.acp_ts.micros,
            self.acp_confidence,
            self.timeliness.end.micros,
        )


# ---------------------------------------------------------------------------
# Field selection and comparison (rules and subscriptions share this)
# ---------------------------------------------------------------------------

Comparator = Literal["==", "!=", "<", "<=", ">", ">="]

_OPS: dict[str, Callable[[Any, Any], bool]] = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}

FEATURE_PREFIX = "feature."

RULE_FIELDS = ("acp_id", "acp_type", "acp_event")
SUBSCRIPTION_FIELDS = ("acp_id", "acp_type", "acp_event", "parent_crate_id")


def field_value(item: Any, field: str) -> Any:
    """Resolve a filter field against a reading, event or plain document."""
    if field.startswith(FEATURE_PREFIX):
        name = field[len(FEATURE_PREFIX):]
        feats = item.get("features") if isinstance(item, dict) else getattr(item, "features", None)
        if not feats:
            return None
        return feats.get(name)
    if isinstance(item, dict):
        return item.get(field)
    return getattr(item, field, None)


def compare(op: Comparator, actual: Any, expected: Any) -> bool:
    """Comparator semantics shared by the rule engine and subscriptions.

    A missing value never matches. Numbers compare numerically, strings
    lexicographically; across types only ``!=`` holds and ordering fails.
    """
    if actual is None:
        return False
    a_num = isinstance(actual, (int, float)) and not isinstance(actual, bool)
    e_num = isinstance(expected, (int, float)) and not isinstance(expected, bool)
    if a_num != e_num:
        return op == "!="
    return _OPS[op](actual, expected)


class FieldCondition(BaseModel):
    """One ``field <op> value`` test; conjunction lists of these form filters."""

    field: str
    op: Comparator
    value: Union[str, int, float]

    def matches(self, item: Any) -> bool:
        return compare(self.op, field_value(item, self.field), self.value)


def check_filter_fields(conds: Iterable[FieldCondition], allowed: tuple[str, ...]) -> Optional[str]:
    """Return the first disallowed field name, or None when all are valid."""
    for cond in conds:
        if cond.field in allowed or cond.field.startswith(FEATURE_PREFIX):
            continue
        return cond.field
    return None


# ---------------------------------------------------------------------------
# Detection configuration
# ---------------------------------------------------------------------------

class ThresholdSpec(BaseModel):
    """Turns one reading into a simple event when a feature crosses a bound."""

    acp_id: Optional[str] = None
    acp_type: Optional[str] = None
    feature: str
    op: Comparator
    value: Union[int, float]
    event_name: str
    ttl_s: float
    confidence: float = 1.0

    @model_validator(mode="after")
    def _ranges(self) -> "ThresholdSpec":
        if self.ttl_s <= 0:
            raise ModelError(f"thresholds[{self.event_name}].ttl_s: must be positive")
        if not (0.0 <= self.confidence <= 1.0):
            raise ModelError(f"thresholds[{self.event_name}].confidence: outside [0, 1]")
        return self

    def applies_to(self, reading: SensorReading) -> bool:
        if self.acp_id is not None and reading.acp_id != self.acp_id:
            return False
        if self.acp_type is not None and reading.acp_type != self.acp_type:
            return False
        return True


class RuleStep(BaseModel):
    """One step of a sequence rule: a conjunction of conditions plus a window."""

    match: list[FieldCondition]
    ttl_s: float

    @model_validator(mode="before")
    @classmethod
    def _single_condition_form(cls, data: Any) -> Any:
        if isinstance(data, dict) and isinstance(data.get("match"), dict):
            data = dict(data)
            data["match"] = [data["match"]]
        return data

    @field_validator("ttl_s")
    @classmethod
    def _positive(cls, v: float) -> float:
        if v <= 0:
            raise ModelError("steps[].ttl_s: must be positive")
        return v

    @property
    def ttl_micros(self) -> int:
        return seconds_to_micros(self.ttl_s)

    def matches(self, event: Any) -> bool:
        return all(cond.matches(event) for cond in self.match)


class EventRule(BaseModel):
    """Ordered-sequence rule producing a derived event from chained simple events."""

    rule_id: str
    derived_type: str
    value_template: str = ""
    steps: list[RuleStep]

    @field_validator("steps")
    @classmethod
    def _at_least_one(cls, steps: list[RuleStep]) -> list[RuleStep]:
        if not steps:
            raise ModelError("rules[].steps: at least one step required")
        return steps

    @model_validator(mode="after")
    def _valid_fields(self) -> "EventRule":
        for step in self.steps:
            bad = check_filter_fields(step.match, RULE_FIELDS)
            if bad is not None:
                raise ModelError(f"rules[{self.rule_id}]: unknown match field {bad!r}")
        return self

    @property
    def window_micros(self) -> int:
        return sum(step.ttl_micros for step in self.steps)

    def render_value(self, final_event: SimpleEvent) -> Union[str, int, float, None]:
        if not self.value_template:
            return self.derived_type
        try:
            return self.value_template.format(
                value=final_event.acp_event_value,
                rule_id=self.rule_id,
                derived_type=self.derived_type,
            )
        except (KeyError, IndexError):
            return self.value_template


class RuleConfig(BaseModel):
    """Top-level shape of the rules/thresholds JSON document."""

    rules: list[EventRule] = Field(default_factory=list)
    thresholds: list[ThresholdSpec] = Field(default_factory=list)


def load_rules(source: Union[str, dict]) -> RuleConfig:
    """Parse a rule file (path or already-loaded dict)."""
    if isinstance(source, dict):
        return RuleConfig.model_validate(source)
    with open(source, "r", encoding="utf-8") as fh:
        return RuleConfig.model_validate(json.load(fh))


# ---------------------------------------------------------------------------
# Simple-event construction (shared by the streaming path and the oracle)
# ---------------------------------------------------------------------------

def simple_events_for(
    reading: SensorReading,
    specs: list[ThresholdSpec],
    default_event_ttl_s: float = 300.0,
) -> list[SimpleEvent]:
    """All simple events one reading raises, in deterministic order.

    A sensor-raised event (payload carrying ``acp_event``) passes through
    first, then threshold specs fire in list order. Event ids are pure
    functions of (spec index, sensor, timestamp) so independent
    implementations agree on constituent identity.
    """
    events: list[SimpleEvent] = []
    ts = reading.acp_ts
    if reading.acp_event:
        events.append(SimpleEvent(
            event_id=f"we-{reading.acp_id}-{ts.micros}",
            acp_id=reading.acp_id,
            acp_ts=ts,
            acp_event=reading.acp_event,
            acp_event_value=reading.acp_event_value,
            acp_confidence=reading.acp_confidence if reading.acp_confidence is not None else 1.0,
            timeliness=timeliness_of(ts, default_event_ttl_s),
            acp_type=reading.acp_type,
            parent_crate_id=reading.parent_crate_id,
            features=reading.features,
        ))
    for idx, spec in enumerate(specs):
        if not spec.applies_to(reading):
            continue
        observed = reading.features.get(spec.feature)
        if observed is None or not compare(spec.op, observed, spec.value):
            continue
        events.append(SimpleEvent(
            event_id=f"se-{idx}-{reading.acp_id}-{ts.micros}",
            acp_id=reading.acp_id,
            acp_ts=ts,
            acp_event=spec.event_name,
            acp_event_value=observed,
            acp_confidence=spec.confidence,
            timeliness=timeliness_of(ts, spec.ttl_s),
            acp_type=reading.acp_type,
            parent_crate_id=reading.parent_crate_id,
            features=reading.features,
        ))
    return events


def chain_confidence(confidences: Iterable[float]) -> float:
    """Product combinator, multiplied in step order and clamped to [0, 1]."""
    conf = 1.0
    for c in confidences:
        conf *= c
    return min(max(conf, 0.0), 1.0)


def derived_event_id(rule_id: str, ts: Timestamp, constituent_ids: list[str]) -> str:
    digest = hashlib.sha1(",".join(constituent_ids).encode("utf-8")).hexdigest()[:8]
    return f"de-{rule_id}-{ts.micros}-{digest}"


def build_derived_event(rule: EventRule, chain: list[SimpleEvent]) -> DerivedEvent:
    """Assemble the derived event for a completed constituent chain."""
    final = chain[-1]
    ids = [e.event_id for e in chain]
    return DerivedEvent(
        event_id=derived_event_id(rule.rule_id, final.acp_ts, ids),
        rule_id=rule.rule_id,
        acp_event=rule.derived_type,
        acp_event_value=rule.render_value(final),
        acp_ts=final.acp_ts,
        acp_confidence=chain_confidence(e.acp_confidence for e in chain),
        constituents=ids,
        timeliness=TimelinessInterval(final.acp_ts, rule.steps[-1].ttl_micros),
    )


# ---------------------------------------------------------------------------
# Crate validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    message: str


CrateLookup = Callable[[str], Optional[CrateRecord]]


def validate_crate(record: CrateRecord, lookup: CrateLookup) -> list[Violation]:
    """Admissibility report for a crate against a store view.

    An empty report means the record may be stored: its parent exists, the
    parent chain stays acyclic and reaches a root within the hop budget, and
    its boundary is a real polygon.
    """
    violations: list[Violation] = []
    if record.acp_boundary.is_degenerate():
        violations.append(Violation(
            "degenerate boundary",
            f"{record.crate_id}: boundary must have >= 3 points and non-zero area",
        ))
    parent = record.parent_crate_id
    if parent is not None:
        seen = {record.crate_id}
        hops = 0
        current = parent
        while current is not None:
            if current in seen:
                violations.append(Violation("cycle", f"{record.crate_id}: parent chain revisits {current!r}"))
                break
            hops += 1
            if hops > MAX_PARENT_HOPS:
                violations.append(Violation("cycle", f"{record.crate_id}: parent chain exceeds {MAX_PARENT_HOPS} hops"))
                break
            seen.add(current)
            rec = lookup(current)
            if rec is None:
                if current == parent:
                    violations.append(Violation("unknown parent", f"{record.crate_id}: parent {current!r} not found"))
                else:
                    violations.append(Violation("unknown parent", f"{record.crate_id}: ancestor {current!r} not found"))
                break
            current = rec.parent_crate_id
    return violations
