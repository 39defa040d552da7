"""Command-line harness: serve, seed, generate, replay, oracle, measure.

Every command other than ``serve`` and ``seed load`` talks to a running
server over its public interfaces (TCP ingest, websocket push, HTTP), so the
harness doubles as an end-to-end latency/throughput probe. Reports go to
stdout as single JSON documents; progress chatter goes to stderr.

Exit codes: 0 ok, 1 usage error, 2 runtime failure, 3 acceptance regression.
"""

from __future__ import annotations

import asyncio
import json
import logging
import statistics
import sys
import time
from pathlib import Path

import click

from .config import AppConfig
from .fleetgen import (
    demo_sensor,
    gen_fleet,
    read_trace,
    seed_crates,
    trace_readings,
    write_records_jsonl,
    write_trace,
)
from .model import CrateRecord, SensorMetadataRecord, Timestamp, load_rules
from .oracle import derive_from_readings
from .store import MetadataStore, ValidationRejected

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_REGRESSION = 3


class RuntimeFailure(Exception):
    pass


class RegressionFailure(Exception):
    pass


def _emit(report: dict) -> None:
    sys.stdout.write(json.dumps(report, indent=2) + "\n")


def _parse_hostport(target: str, scheme: str) -> tuple[str, int]:
    rest = target[len(scheme) + 3:] if target.startswith(f"{scheme}://") else target
    host, _, port = rest.rpartition(":")
    if not host or not port.isdigit():
        raise click.UsageError(f"expected {scheme}://host:port, got {target!r}")
    return host, int(port)


@click.group()
@click.option("--config", "config_path", default=None, help="Path to the YAML config file.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None):
    """Real-time building sensor platform harness."""
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s %(message)s",
                        stream=sys.stderr)
    try:
        ctx.obj = AppConfig.load(config_path)
    except FileNotFoundError as exc:
        raise click.UsageError(str(exc))


@cli.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_obj
def serve(cfg: AppConfig, host: str | None, port: int | None):
    """Run the platform server (ingest, pipeline, APIs, websocket push)."""
    import uvicorn

    from .service import create_app

    if host:
        cfg.server.host = host
    if port is not None:
        cfg.server.port = port
    uvicorn.run(create_app(cfg), host=cfg.server.host, port=cfg.server.port,
                log_level="info", ws_ping_interval=None, ws_ping_timeout=None)


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

@cli.group()
def gen():
    """Deterministic generators for fleets and traffic traces."""


@gen.command("fleet")
@click.option("--sensors", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", default="fleet", show_default=True)
def gen_fleet_cmd(sensors: int, seed: int, out_dir: str):
    """Generate N sensors plus the seed crate hierarchy into OUT/."""
    if sensors < 1:
        raise click.UsageError("--sensors must be >= 1")
    crates, fleet = gen_fleet(sensors, seed)
    out = Path(out_dir)
    write_records_jsonl(out / "crates.jsonl", crates)
    write_records_jsonl(out / "sensors.jsonl", fleet)
    _emit({"crates": len(crates), "sensors": len(fleet), "out": str(out), "seed": seed})


@gen.command("trace")
@click.option("--sensors", type=int, default=None, help="Generate a fleet of this size.")
@click.option("--fleet", "fleet_dir", default=None, help="Use sensors.jsonl from this directory.")
@click.option("--seed", type=int, default=0)
@click.option("--period", "period_s", type=float, default=20.0, show_default=True)
@click.option("--duration", "duration_s", type=float, required=True)
@click.option("--start-ts", default=None, help="Anchor acp_ts at this epoch instant.")
@click.option("--out", "out_path", required=True)
def gen_trace_cmd(sensors, fleet_dir, seed, period_s, duration_s, start_ts, out_path):
    """Write a replayable traffic trace for a fleet."""
    if (sensors is None) == (fleet_dir is None):
        raise click.UsageError("give exactly one of --sensors or --fleet")
    if sensors is not None:
        _, fleet = gen_fleet(sensors, seed)
    else:
        docs = [json.loads(line) for line in Path(fleet_dir, "sensors.jsonl").read_text().splitlines() if line]
        fleet = [SensorMetadataRecord.model_validate(d) for d in docs]
    anchor = Timestamp.coerce(start_ts) if start_ts else None
    count = write_trace(out_path, fleet, period_s, duration_s, seed, anchor)
    _emit({"entries": count, "sensors": len(fleet), "out": out_path, "seed": seed})


# ---------------------------------------------------------------------------
# seed
# ---------------------------------------------------------------------------

@cli.group()
def seed():
    """Bulk-load metadata into the store."""


@seed.command("load")
@click.argument("files", nargs=-1, type=click.Path(exists=True))
@click.option("--demo", is_flag=True, help="Load the built-in demo building and sensor.")
@click.pass_obj
def seed_load(cfg: AppConfig, files: tuple[str, ...], demo: bool):
    """Load crate/sensor JSONL files (record kind auto-detected per line)."""
    if not files and not demo:
        raise click.UsageError("nothing to load: give files and/or --demo")
    crates: list[CrateRecord] = []
    sensors: list[SensorMetadataRecord] = []
    if demo:
        crates.extend(seed_crates())
        sensors.append(demo_sensor())
    for name in files:
        for line in Path(name).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if "crate_id" in doc:
                crates.append(CrateRecord.model_validate(doc))
            elif "acp_id" in doc:
                sensors.append(SensorMetadataRecord.model_validate(doc))
            else:
                raise RuntimeFailure(f"{name}: unrecognizable record {line[:80]}")
    store = MetadataStore(cfg.storage.metadata_db)
    try:
        loaded = _load_crates_in_order(store, crates)
        for record in sensors:
            store.put_sensor(record)
    finally:
        store.close()
    _emit({"crates": loaded, "sensors": len(sensors), "db": str(cfg.storage.metadata_db)})


def _load_crates_in_order(store: MetadataStore, crates: list[CrateRecord]) -> int:
    """Insert parents before children regardless of file order."""
    pending = list(crates)
    loaded = 0
    while pending:
        progressed = []
        for record in pending:
            try:
                store.put_crate(record)
                loaded += 1
            except ValidationRejected as exc:
                if any(v.code == "unknown parent" for v in exc.violations):
                    progressed.append(record)
                else:
                    raise RuntimeFailure(f"crate {record.crate_id} rejected: {exc}")
        if len(progressed) == len(pending):
            missing = ", ".join(r.crate_id for r in progressed)
            raise RuntimeFailure(f"crates with unresolvable parents: {missing}")
        pending = progressed
    return loaded


# ---------------------------------------------------------------------------
# run replay
# ---------------------------------------------------------------------------

@cli.group()
def run():
    """Traffic senders."""


@run.command("replay")
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True))
@click.option("--speed", type=float, default=1.0, show_default=True,
              help="Time scale; 0 sends back-to-back.")
@click.option("--target", required=True, help="tcp://host:port ingest channel.")
@click.option("--restamp/--keep-ts", default=False,
              help="Rewrite acp_ts to the wall clock at send time.")
def run_replay(trace_path: str, speed: float, target: str, restamp: bool):
    """Send a trace into a live ingest channel at scaled original spacing."""
    host, port = _parse_hostport(target, "tcp")
    _, entries = read_trace(trace_path)
    report = asyncio.run(replay_entries(entries, host, port, speed, restamp))
    _emit(report)


async def replay_entries(entries: list[dict], host: str, port: int,
                         speed: float, restamp: bool) -> dict:
    try:
        reader, writer = await asyncio.open_connection(host, port)
    except OSError as exc:
        raise RuntimeFailure(f"target unreachable: {exc}")
    started = time.monotonic()
    base = entries[0]["send_ts"] if entries else 0.0
    sent = 0
    try:
        for entry in entries:
            if speed > 0:
                due = started + (entry["send_ts"] - base) / speed
                delay = due - time.monotonic()
                if delay > 0:
                    await asyncio.sleep(delay)
            payload = entry["payload"]
            if restamp:
                payload = dict(payload)
                payload["acp_ts"] = Timestamp.now().wire()
            writer.write(json.dumps(payload, separators=(",", ":")).encode() + b"\n")
            sent += 1
            if sent % 500 == 0:
                await writer.drain()
        await writer.drain()
    finally:
        writer.close()
        try:
            await writer.wait_closed()
        except (ConnectionError, OSError):
            pass
    duration = time.monotonic() - started
    return {
        "sent": sent,
        "duration_s": round(duration, 3),
        "achieved_rate_per_s": round(sent / duration, 2) if duration > 0 else None,
    }


# ---------------------------------------------------------------------------
# oracle derive
# ---------------------------------------------------------------------------

@cli.group()
def oracle():
    """Reference implementations used to cross-check the streaming engine."""


@oracle.command("derive")
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True))
@click.option("--rules", "rules_path", required=True, type=click.Path(exists=True))
@click.option("--default-event-ttl", type=float, default=300.0, show_default=True)
def oracle_derive(trace_path: str, rules_path: str, default_event_ttl: float):
    """Exhaustively derive events from a trace; one JSON document per line."""
    try:
        rule_config = load_rules(rules_path)
    except (ValueError, KeyError) as exc:
        raise click.UsageError(f"rules file invalid: {exc}")
    _, entries = read_trace(trace_path)
    readings = trace_readings(entries)
    derived = derive_from_readings(readings, rule_config.rules, rule_config.thresholds,
                                   default_event_ttl)
    for event in derived:
        sys.stdout.write(json.dumps(event.wire_doc(), separators=(",", ":")) + "\n")
    sys.stderr.write(f"derived {len(derived)} events from {len(readings)} readings\n")


# ---------------------------------------------------------------------------
# measure latency
# ---------------------------------------------------------------------------

@cli.group()
def measure():
    """End-to-end performance probes against a running server."""


@measure.command("latency")
@click.option("--sensors", type=int, required=True)
@click.option("--rate", type=float, required=True, help="Total messages per second.")
@click.option("--duration", type=float, required=True, help="Publish window in seconds.")
@click.option("--ingest", "ingest_target", default=None, help="tcp://host:port (default from config).")
@click.option("--ws", "ws_url", default=None, help="ws://host:port/rtmonitor/WS (default from config).")
@click.pass_obj
def measure_latency(cfg: AppConfig, sensors: int, rate: float, duration: float,
                    ingest_target: str | None, ws_url: str | None):
    """Publish timestamped readings and measure send-to-push latency."""
    if sensors < 1:
        raise click.UsageError("--sensors must be >= 1")
    if rate <= 0 or duration <= 0:
        raise click.UsageError("--rate and --duration must be positive")
    ingest_target = ingest_target or f"tcp://{cfg.ingest.tcp_bind}"
    ws_url = ws_url or f"ws://{cfg.server.host}:{cfg.server.port}/rtmonitor/WS"
    host, port = _parse_hostport(ingest_target, "tcp")
    report = asyncio.run(run_latency_probe(sensors, rate, duration, host, port, ws_url))
    _emit(report)
    if report["loss"] > 0 and rate <= 100:
        raise RegressionFailure(f"lost {report['loss']} messages at {rate}/s on loopback")


async def run_latency_probe(sensors: int, rate: float, duration: float,
                            host: str, port: int, ws_url: str) -> dict:
    """Concurrent publisher (TCP ingest) and subscriber (match-all websocket)."""
    import websockets

    prefix = "lat-co2-"
    latencies: list[float] = []
    received_seqs: set[int] = set()
    subscribed = asyncio.Event()
    done_sending = asyncio.Event()
    sent = 0

    async def subscriber() -> None:
        async with websockets.connect(ws_url, ping_interval=None) as ws:
            hello = json.loads(await ws.recv())
            if hello.get("msg_type") != "rt_connect_ok":
                raise RuntimeFailure(f"unexpected hello: {hello}")
            await ws.send(json.dumps({"msg_type": "rt_subscribe",
                                      "request_id": "latency-probe", "filters": []}))
            while True:
                frame = json.loads(await ws.recv())
                msg_type = frame.get("msg_type")
                if msg_type == "rt_subscribe_ok":
                    subscribed.set()
                    continue
                if msg_type == "rt_ping":
                    await ws.send(json.dumps({"msg_type": "rt_pong"}))
                    continue
                if msg_type != "rt_data":
                    continue
                now = time.time()
                for doc in frame.get("request_data", []):
                    acp_id = doc.get("acp_id", "")
                    feats = doc.get("features")
                    if not acp_id.startswith(prefix) or not feats:
                        continue
                    latencies.append(now - float(doc["acp_ts"]))
                    received_seqs.add(int(feats["seq"]))
                if done_sending.is_set() and len(received_seqs) >= sent:
                    return

    async def publisher() -> None:
        nonlocal sent
        await asyncio.wait_for(subscribed.wait(), timeout=10)
        reader, writer = await asyncio.open_connection(host, port)
        total = int(rate * duration)
        start = time.monotonic()
        try:
            for i in range(total):
                due = start + i / rate
                delay = due - time.monotonic()
                if delay > 0:
                    await asyncio.sleep(delay)
                payload = {
                    "acp_id": f"{prefix}{i % sensors:06x}",
                    "acp_ts": Timestamp.now().wire(),
                    "features": {"co2": 400 + (i % 100), "seq": i},
                }
                writer.write(json.dumps(payload, separators=(",", ":")).encode() + b"\n")
                await writer.drain()
                sent += 1
        finally:
            done_sending.set()
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass

    try:
        sub_task = asyncio.create_task(subscriber())
        await publisher()
        try:
            await asyncio.wait_for(sub_task, timeout=10)
        except asyncio.TimeoutError:
            sub_task.cancel()
    except OSError as exc:
        raise RuntimeFailure(f"server unreachable: {exc}")

    loss = sent - len(received_seqs)
    lat_ms = sorted(v * 1000 for v in latencies)
    return {
        "sensors": sensors,
        "rate_per_s": rate,
        "duration_s": duration,
        "sent": sent,
        "received": len(received_seqs),
        "loss": loss,
        "p50_ms": round(_percentile(lat_ms, 50), 3) if lat_ms else None,
        "p95_ms": round(_percentile(lat_ms, 95), 3) if lat_ms else None,
        "max_ms": round(lat_ms[-1], 3) if lat_ms else None,
        "mean_ms": round(statistics.fmean(lat_ms), 3) if lat_ms else None,
    }


def _percentile(sorted_values: list[float], pct: float) -> float:
    if not sorted_values:
        return float("nan")
    k = max(0, min(len(sorted_values) - 1,
                   round(pct / 100 * len(sorted_values) + 0.5) - 1))
    return sorted_values[k]


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.UsageError as exc:
        sys.stderr.write(f"usage error: {exc.format_message()}\n")
        sys.exit(EXIT_USAGE)
    except click.ClickException as exc:
        sys.stderr.write(f"error: {exc.format_message()}\n")
        sys.exit(EXIT_USAGE)
    except click.exceptions.Abort:
        sys.exit(EXIT_USAGE)
    except RegressionFailure as exc:
        sys.stderr.write(f"acceptance regression: {exc}\n")
        sys.exit(EXIT_REGRESSION)
    except RuntimeFailure as exc:
        sys.stderr.write(f"runtime failure: {exc}\n")
        sys.exit(EXIT_RUNTIME)


if __name__ == "__main__":
    main()
