"""Deterministic seed data, sensor fleets and synthetic traffic traces.

Every generator is a pure function of its inputs and seed: re-running with
the same arguments produces byte-identical output. Trace files are JSONL
with a header line carrying the seed and generator version, followed by
``{send_ts, topic, payload}`` entries with non-decreasing ``send_ts``.
"""

from __future__ import annotations

import json
import random
from pathlib import Path
from typing import Iterator, Optional

from .model import (
    BoundaryPolygon,
    CrateRecord,
    LocationRef,
    SensorMetadataRecord,
    SensorReading,
    Timestamp,
)

GENERATOR_VERSION = "1"

BUILDING_SYSTEM = "WGB"

ELSYS_FEATURES = ["co2", "humidity", "light", "motion", "temperature", "vdd"]


def seed_crates() -> list[CrateRecord]:
    """The demo building hierarchy: building, two floors, one room."""
    building_outline = [[0, 0], [0, 56], [245, 56], [245, 0]]
    return [
        CrateRecord(
            crate_id="WGB",
            crate_type="building",
            long_name="West Gate Building",
            description="Demo building",
            acp_location=LocationRef(system="GPS", acp_lat=-27.116667, acp_lng=-109.366667, acp_alt=0.0),
            acp_boundary=BoundaryPolygon(system=BUILDING_SYSTEM, boundary=building_outline),
            acp_ts=Timestamp.parse("1589469825.165538"),
        ),
        CrateRecord(
            crate_id="GF",
            parent_crate_id="WGB",
            crate_type="floor",
            long_name="Ground Floor",
            description="Ground floor",
            acp_location=LocationRef(system=BUILDING_SYSTEM, x=36.5, y=39, f=0, zf=0),
            acp_boundary=BoundaryPolygon(system=BUILDING_SYSTEM, boundary=building_outline),
            acp_ts=Timestamp.parse("1589469825.165538"),
        ),
        CrateRecord(
            crate_id="FF",
            parent_crate_id="WGB",
            crate_type="floor",
            long_name="First Floor",
            description="First floor",
            acp_location=LocationRef(system=BUILDING_SYSTEM, x=36.5, y=39, f=1, zf=0),
            acp_boundary=BoundaryPolygon(system=BUILDING_SYSTEM, boundary=building_outline),
            acp_ts=Timestamp.parse("1589469825.165538"),
        ),
        CrateRecord(
            crate_id="FE11",
            parent_crate_id="FF",
            crate_type="room",
            long_name="Computer Science Department",
            description="Crate Description",
            acp_location=LocationRef(system=BUILDING_SYSTEM, x=22.06, y=34.67, f=1, zf=0),
            acp_boundary=BoundaryPolygon(system=BUILDING_SYSTEM, boundary=[[0, 0], [0, 78], [73, 78], [73, 0]]),
            acp_ts=Timestamp.parse("1589469825.165538"),
        ),
    ]


def demo_sensor() -> SensorMetadataRecord:
    """The documented CO2 sensor living in room FE11."""
    return SensorMetadataRecord(
        acp_id="elsys-co2-041ba9",
        acp_type="elsys-co2",
        owner="ijl20",
        source="mqtt_ttn",
        features=list(ELSYS_FEATURES),
        acp_location=LocationRef(
            system="GPS",
            acp_alt=10,
            acp_lat=-27.116667,
            acp_lng=-109.366667,
            parent_crate_id="FE11",
        ),
        acp_ts=Timestamp.parse("1589469979.861816"),
    )


def demo_reading_payload() -> dict:
    """The documented reading for the demo sensor, as a wire payload."""
    return {
        "acp_id": "elsys-co2-041ba9",
        "acp_ts": "1589469979.861816",
        "features": {
            "co2": 415,
            "device": "elsys_co2",
            "humidity": 36,
            "light": 0,
            "motion": 2,
            "temperature": 15.3,
            "vdd": 3659,
        },
    }


def gen_fleet(sensors: int, seed: int) -> tuple[list[CrateRecord], list[SensorMetadataRecord]]:
    """N simulated sensors distributed over the seed hierarchy's rooms."""
    if sensors < 1:
        raise ValueError("sensors: must be >= 1")
    crates = seed_crates()
    rooms = [c for c in crates if c.crate_type == "room"]
    rng = random.Random(seed)
    fleet: list[SensorMetadataRecord] = []
    for i in range(sensors):
        room = rooms[i % len(rooms)]
        loc = room.acp_location
        fleet.append(SensorMetadataRecord(
            acp_id=f"sim-co2-{i:06x}",
            acp_type="sim-co2",
            owner="sim",
            source="sim",
            features=list(ELSYS_FEATURES),
            acp_location=LocationRef(
                system=loc.system,
                x=round((loc.x or 0) + rng.uniform(0, 10), 2),
                y=round((loc.y or 0) + rng.uniform(0, 10), 2),
                f=loc.f,
                zf=0,
                parent_crate_id=room.crate_id,
            ),
            acp_ts=Timestamp.parse("1589469979.861816"),
        ))
    return crates, fleet


class _SensorSim:
    """Random-walk feature state for one simulated sensor."""

    def __init__(self, acp_id: str, seed: int):
        self.acp_id = acp_id
        self.rng = random.Random(f"{seed}:{acp_id}")
        self.co2 = self.rng.uniform(380.0, 600.0)
        self.temperature = self.rng.uniform(14.0, 24.0)
        self.humidity = self.rng.uniform(30.0, 60.0)
        self.burst_left = 0

    def sample(self) -> dict:
        rng = self.rng
        self.co2 = min(1500.0, max(350.0, self.co2 + rng.gauss(0.0, 15.0)))
        self.temperature = min(35.0, max(5.0, self.temperature + rng.gauss(0.0, 0.1)))
        self.humidity = min(90.0, max(10.0, self.humidity + rng.gauss(0.0, 0.5)))
        if self.burst_left > 0:
            self.burst_left -= 1
            motion = rng.randint(1, 4)
        elif rng.random() < 0.08:
            self.burst_left = rng.randint(1, 3)
            motion = rng.randint(1, 4)
        else:
            motion = 0
        return {
            "co2": round(self.co2, 1),
            "humidity": round(self.humidity, 1),
            "light": rng.choice([0, 0, 0, 10, 120, 300]),
            "motion": motion,
            "temperature": round(self.temperature, 1),
            "vdd": rng.randint(3500, 3700),
        }


def gen_trace_entries(
    fleet: list[SensorMetadataRecord],
    period_s: float,
    duration_s: float,
    seed: int,
    start_ts: Optional[Timestamp] = None,
) -> Iterator[dict]:
    """Periodic readings for the fleet, staggered inside each period.

    ``send_ts`` values are offsets in seconds from zero unless ``start_ts``
    anchors them to an absolute epoch.
    """
    base = start_ts.seconds() if start_ts is not None else 0.0
    sims = [_SensorSim(s.acp_id, seed) for s in fleet]
    n = max(len(sims), 1)
    entries: list[tuple[float, int]] = []
    ticks = int(duration_s / period_s) if period_s > 0 else 1
    for tick in range(ticks):
        for i in range(len(sims)):
            offset = tick * period_s + (i / n) * period_s
            if offset >= duration_s:
                continue
            entries.append((offset, i))
    entries.sort(key=lambda e: (e[0], e[1]))
    for offset, i in entries:
        ts = Timestamp.from_seconds(base + offset)
        payload = {
            "acp_id": sims[i].acp_id,
            "acp_ts": ts.wire(),
            "features": sims[i].sample(),
        }
        yield {
            "send_ts": round(base + offset, 6),
            "topic": f"acp/{sims[i].acp_id}/up",
            "payload": payload,
        }


def write_trace(
    path: Path | str,
    fleet: list[SensorMetadataRecord],
    period_s: float,
    duration_s: float,
    seed: int,
    start_ts: Optional[Timestamp] = None,
) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        header = {"seed": seed, "generator_version": GENERATOR_VERSION,
                  "sensors": len(fleet), "period_s": period_s, "duration_s": duration_s}
        fh.write(json.dumps(header) + "\n")
        for entry in gen_trace_entries(fleet, period_s, duration_s, seed, start_ts):
            fh.write(json.dumps(entry, separators=(",", ":")) + "\n")
            count += 1
    return count


def read_trace(path: Path | str) -> tuple[dict, list[dict]]:
    """Returns (header, entries); tolerates headerless files."""
    entries: list[dict] = []
    header: dict = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if i == 0 and "payload" not in doc:
                header = doc
                continue
            entries.append(doc)
    return header, entries


def trace_readings(entries: list[dict]) -> list[SensorReading]:
    return [SensorReading.model_validate(e["payload"]) for e in entries]


def write_records_jsonl(path: Path | str, records: list) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.wire_doc(), separators=(",", ":")) + "\n")
