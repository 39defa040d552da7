"""Persistence: metadata with indexed lookup, readings in duplicated JSONL views.

Crate and sensor metadata live in an embedded sqlite database (WAL mode, so
the seed-loader CLI and a running server can share it). Readings are
appended to two parallel JSON-lines views, partitioned by UTC day of
``acp_ts``:

    data/day/<YYYY-MM-DD>.jsonl            all sensors, one file per day
    data/sensor/<acp_id>/<YYYY-MM-DD>.jsonl    per-sensor day files

The same serialized line goes to both views, so they stay byte-identical as
record multisets. A crash can leave at most one partial trailing line per
file; readers detect and skip it.
"""

from __future__ import annotations

import json
import logging
import re
import sqlite3
import threading
from pathlib import Path
from typing import Iterator, Optional

from .model import (
    CrateRecord,
    SensorMetadataRecord,
    SensorReading,
    Timestamp,
    Violation,
    validate_crate,
)

logger = logging.getLogger(__name__)

_SAFE_NAME = re.compile(r"[^A-Za-z0-9._-]")


def sanitize_name(name: str) -> str:
    """Make an identifier safe for use as a file-system path component."""
    cleaned = _SAFE_NAME.sub("_", name)
    return cleaned or "_"


class NotFound(KeyError):
    pass


class ValidationRejected(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(f"{v.code}: {v.message}" for v in violations))


# ---------------------------------------------------------------------------
# Metadata
# ---------------------------------------------------------------------------

_SCHEMA = """
CREATE TABLE IF NOT EXISTS crates (
    crate_id TEXT PRIMARY KEY,
    parent_crate_id TEXT,
    crate_type TEXT NOT NULL,
    floor INTEGER,
    doc TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_crates_parent ON crates (parent_crate_id);
CREATE INDEX IF NOT EXISTS idx_crates_type ON crates (crate_type);
CREATE INDEX IF NOT EXISTS idx_crates_floor ON crates (floor);
CREATE TABLE IF NOT EXISTS sensors (
    acp_id TEXT PRIMARY KEY,
    parent_crate_id TEXT,
    doc TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_sensors_parent ON sensors (parent_crate_id);
"""


class MetadataStore:
    """Crate and sensor tables with secondary indexes on the query paths.

    Reads are cheap sqlite lookups; writes are serialized behind a lock.
    Multiple processes may open the same database (WAL journal), which is
    how ``seed load`` feeds a running server.
    """

    def __init__(self, db_path: Path | str):
        self._path = Path(db_path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._conn = sqlite3.connect(str(self._path), check_same_thread=False)
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA busy_timeout=5000")
        self._conn.executescript(_SCHEMA)
        self._conn.commit()
        self._lock = threading.RLock()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- crates ------------------------------------------------------------

    def put_crate(self, record: CrateRecord) -> CrateRecord:
        """Upsert after admissibility validation; stamps acp_ts when absent."""
        violations = validate_crate(record, self.get_crate_or_none)
        if violations:
            raise ValidationRejected(violations)
        if record.acp_ts is None:
            record = record.model_copy(update={"acp_ts": Timestamp.now()})
        with self._lock:
            self._conn.execute(
                "INSERT INTO crates (crate_id, parent_crate_id, crate_type, floor, doc) "
                "VALUES (?, ?, ?, ?, ?) "
                "ON CONFLICT(crate_id) DO UPDATE SET parent_crate_id=excluded.parent_crate_id, "
                "crate_type=excluded.crate_type, floor=excluded.floor, doc=excluded.doc",
                (
                    record.crate_id,
                    record.parent_crate_id,
                    record.crate_type,
                    record.floor_number,
                    json.dumps(record.wire_doc()),
                ),
            )
            self._conn.commit()
        return record

    def get_crate_or_none(self, crate_id: str) -> Optional[CrateRecord]:
        with self._lock:
            row = self._conn.execute(
                "SELECT doc FROM crates WHERE crate_id = ?", (crate_id,)
            ).fetchone()
        if row is None:
            return None
        return CrateRecord.model_validate(json.loads(row[0]))

    def get_crate_record(self, crate_id: str) -> CrateRecord:
        rec = self.get_crate_or_none(crate_id)
        if rec is None:
            raise NotFound(crate_id)
        return rec

    def get_crate(self, crate_id: str, children_depth: Optional[int] = 0) -> dict:
        """Crate document with descendants nested to the given depth.

        Depth 0 returns just the crate (no ``children`` key); depth ``d``
        includes ``d`` generations; ``None`` means the full subtree.
        """
        record = self.get_crate_record(crate_id)
        return self._tree(record, children_depth)

    def _tree(self, record: CrateRecord, depth: Optional[int]) -> dict:
        doc = record.wire_doc()
        if depth == 0:
            return doc
        next_depth = None if depth is None else depth - 1
        doc["children"] = [
            self._tree(child, next_depth) for child in self.children_of(record.crate_id)
        ]
        return doc

    def children_of(self, crate_id: str) -> list[CrateRecord]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT doc FROM crates WHERE parent_crate_id = ? ORDER BY crate_id",
                (crate_id,),
            ).fetchall()
        return [CrateRecord.model_validate(json.loads(r[0])) for r in rows]

    def descendant_ids(self, crate_id: str) -> list[str]:
        """All crate ids strictly below the given crate (breadth-first)."""
        out: list[str] = []
        frontier = [crate_id]
        while frontier:
            with self._lock:
                marks = ",".join("?" for _ in frontier)
                rows = self._conn.execute(
                    f"SELECT crate_id FROM crates WHERE parent_crate_id IN ({marks}) ORDER BY crate_id",
                    frontier,
                ).fetchall()
            frontier = [r[0] for r in rows]
            out.extend(frontier)
        return out

    def crates_on_floor(self, floor: int) -> list[CrateRecord]:
        """Room crates located on the floor plus the floor crate itself."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT doc FROM crates WHERE floor = ? AND crate_type IN ('room', 'floor') "
                "ORDER BY crate_id",
                (floor,),
            ).fetchall()
        return [CrateRecord.model_validate(json.loads(r[0])) for r in rows]

    def all_crates(self) -> list[CrateRecord]:
        with self._lock:
            rows = self._conn.execute("SELECT doc FROM crates ORDER BY crate_id").fetchall()
        return [CrateRecord.model_validate(json.loads(r[0])) for r in rows]

    # -- sensors -----------------------------------------------------------

    def put_sensor(self, record: SensorMetadataRecord) -> SensorMetadataRecord:
        if record.acp_ts is None:
            record = record.model_copy(update={"acp_ts": Timestamp.now()})
        with self._lock:
            self._conn.execute(
                "INSERT INTO sensors (acp_id, parent_crate_id, doc) VALUES (?, ?, ?) "
                "ON CONFLICT(acp_id) DO UPDATE SET parent_crate_id=excluded.parent_crate_id, "
                "doc=excluded.doc",
                (record.acp_id, record.parent_crate_id, json.dumps(record.wire_doc())),
            )
            self._conn.commit()
        return record

    def get_sensor_or_none(self, acp_id: str) -> Optional[SensorMetadataRecord]:
        with self._lock:
            row = self._conn.execute(
                "SELECT doc FROM sensors WHERE acp_id = ?", (acp_id,)
            ).fetchone()
        if row is None:
            return None
        return SensorMetadataRecord.model_validate(json.loads(row[0]))

    def get_sensor(self, acp_id: str) -> SensorMetadataRecord:
        rec = self.get_sensor_or_none(acp_id)
        if rec is None:
            raise NotFound(acp_id)
        return rec

    def sensors_in_crate(self, crate_id: str, recursive: bool = False) -> list[SensorMetadataRecord]:
        if self.get_crate_or_none(crate_id) is None:
            raise NotFound(crate_id)
        targets = [crate_id]
        if recursive:
            targets.extend(self.descendant_ids(crate_id))
        marks = ",".join("?" for _ in targets)
        with self._lock:
            rows = self._conn.execute(
                f"SELECT doc FROM sensors WHERE parent_crate_id IN ({marks}) ORDER BY acp_id",
                targets,
            ).fetchall()
        return [SensorMetadataRecord.model_validate(json.loads(r[0])) for r in rows]

    def all_sensors(self) -> list[SensorMetadataRecord]:
        with self._lock:
            rows = self._conn.execute("SELECT doc FROM sensors ORDER BY acp_id").fetchall()
        return [SensorMetadataRecord.model_validate(json.loads(r[0])) for r in rows]

    def counts(self) -> dict:
        with self._lock:
            crates = self._conn.execute("SELECT COUNT(*) FROM crates").fetchone()[0]
            sensors = self._conn.execute("SELECT COUNT(*) FROM sensors").fetchone()[0]
        return {"crates": crates, "sensors": sensors}


# ---------------------------------------------------------------------------
# Readings
# ---------------------------------------------------------------------------

def read_jsonl(path: Path) -> list[dict]:
    """Parse a JSONL file, skipping a partial trailing line left by a crash."""
    if not path.exists():
        return []
    out: list[dict] = []
    with path.open("r", encoding="utf-8", errors="replace") as fh:
        lines = fh.readlines()
    for i, line in enumerate(lines):
        if not line.endswith("\n"):
            logger.warning("skipping partial trailing line in %s", path)
            continue
        line = line.strip()
        if not line:
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError:
            logger.warning("skipping corrupt line %d in %s", i + 1, path)
    return out


class ReadingsRepository:
    """Append-only reading store duplicated by-date and per-sensor."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.day_dir = self.root / "day"
        self.sensor_dir = self.root / "sensor"
        self.events_dir = self.root / "events"
        self.day_dir.mkdir(parents=True, exist_ok=True)
        self.sensor_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._latest: dict[str, SensorReading] = {}
        self.appends = 0
        self.append_errors = 0

    def append(self, reading: SensorReading) -> None:
        """Write one reading to both views; the same bytes go to each file."""
        day = reading.acp_ts.date_utc().isoformat()
        line = json.dumps(reading.wire_doc(), separators=(",", ":")) + "\n"
        day_path = self.day_dir / f"{day}.jsonl"
        sensor_path = self.sensor_dir / sanitize_name(reading.acp_id) / f"{day}.jsonl"
        with self._lock:
            try:
                sensor_path.parent.mkdir(parents=True, exist_ok=True)
                with day_path.open("a", encoding="utf-8") as fh:
                    fh.write(line)
                with sensor_path.open("a", encoding="utf-8") as fh:
                    fh.write(line)
                self.appends += 1
            except OSError:
                self.append_errors += 1
                raise
            cached = self._latest.get(reading.acp_id)
            if cached is None or reading.acp_ts.micros >= cached.acp_ts.micros:
                self._latest[reading.acp_id] = reading

    def append_event(self, event_doc: dict, ts: Timestamp) -> None:
        """Events get their own by-date files next to the reading views."""
        self.events_dir.mkdir(parents=True, exist_ok=True)
        path = self.events_dir / f"{ts.date_utc().isoformat()}.jsonl"
        line = json.dumps(event_doc, separators=(",", ":")) + "\n"
        with self._lock:
            with path.open("a", encoding="utf-8") as fh:
                fh.write(line)

    def _sensor_day_files(self, acp_id: str) -> list[Path]:
        d = self.sensor_dir / sanitize_name(acp_id)
        if not d.exists():
            return []
        return sorted(d.glob("*.jsonl"))

    def latest(self, acp_id: str) -> Optional[SensorReading]:
        """Reading with the maximum acp_ts (ties resolved to the last appended)."""
        cached = self._latest.get(acp_id)
        if cached is not None:
            return cached
        files = self._sensor_day_files(acp_id)
        if not files:
            return None
        # Day files are named by acp_ts date, so the max timestamp lives in
        # the lexicographically last file.
        best: Optional[SensorReading] = None
        for doc in read_jsonl(files[-1]):
            candidate = SensorReading.model_validate(doc)
            if best is None or candidate.acp_ts.micros >= best.acp_ts.micros:
                best = candidate
        if best is not None:
            self._latest[acp_id] = best
        return best

    def range(self, acp_id: str, ts_from: Timestamp, ts_to: Timestamp) -> list[SensorReading]:
        """All readings with acp_ts in [ts_from, ts_to], ascending by acp_ts."""
        if ts_from.micros > ts_to.micros:
            raise ValueError("from: must be <= to")
        out: list[SensorReading] = []
        for path in self._sensor_day_files(acp_id):
            day = path.stem
            if day < ts_from.date_utc().isoformat() or day > ts_to.date_utc().isoformat():
                continue
            for doc in read_jsonl(path):
                reading = SensorReading.model_validate(doc)
                if ts_from.micros <= reading.acp_ts.micros <= ts_to.micros:
                    out.append(reading)
        out.sort(key=lambda r: r.acp_ts.micros)
        return out

    def has_readings(self, acp_id: str) -> bool:
        return bool(self._latest.get(acp_id)) or bool(self._sensor_day_files(acp_id))

    def day_docs(self, day: str) -> list[dict]:
        return read_jsonl(self.day_dir / f"{day}.jsonl")

    def iter_day_files(self) -> Iterator[Path]:
        yield from sorted(self.day_dir.glob("*.jsonl"))

    def iter_sensor_ids(self) -> Iterator[str]:
        if self.sensor_dir.exists():
            for d in sorted(self.sensor_dir.iterdir()):
                if d.is_dir():
                    yield d.name
