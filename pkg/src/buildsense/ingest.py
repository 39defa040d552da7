"""Intake: accept raw sensor messages, archive them, decode, hand downstream.

Channels timestamp each message on arrival, archive the raw bytes before any
parsing is attempted, then decode to a reading and enqueue it for stream
processing over a bounded queue (backpressure blocks the channel reader).

Two channel types exist: an MQTT subscriber (a minimal MQTT 3.1.1 client,
written here because no client library is available in this environment)
and a newline-delimited TCP test channel that lets the whole stack run
without a broker.
"""

from __future__ import annotations

import asyncio
import base64
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .config import IngestConfig
from .model import ModelError, SensorReading, Timestamp
from .store import sanitize_name

logger = logging.getLogger(__name__)


class IntakeError(Exception):
    """Intake cannot start with the given configuration."""


@dataclass
class RawEnvelope:
    """One raw message plus the arrival timestamp assigned by the channel."""

    source: str
    topic: str
    payload: bytes
    arrival_ts: Timestamp


@dataclass
class IngestOutcome:
    archived: bool = False
    decoded: bool = False
    enqueued: bool = False
    archive_path: Optional[Path] = None
    reason: Optional[str] = None


@dataclass
class IngestCounters:
    received: int = 0
    archived: int = 0
    archive_errors: int = 0
    decoded: int = 0
    quarantined: int = 0
    oversized_dropped: int = 0
    enqueued: int = 0

    def as_dict(self) -> dict:
        return dict(vars(self))


Decoder = Callable[[dict, RawEnvelope], SensorReading]


def _default_decode(doc: dict, envelope: RawEnvelope) -> SensorReading:
    """Pass-through JSON reading: numeric feature map plus optional event fields."""
    acp_id = doc.get("acp_id")
    if not isinstance(acp_id, str) or not acp_id:
        raise ModelError("acp_id: missing or not a string")
    raw_features = doc.get("features")
    if not isinstance(raw_features, dict):
        raise ModelError("features: missing or not a map")
    features = {
        k: v for k, v in raw_features.items()
        if isinstance(v, (int, float)) and not isinstance(v, bool)
    }
    if not features:
        raise ModelError("features: empty after dropping non-numeric entries")
    ts = Timestamp.coerce(doc["acp_ts"]) if "acp_ts" in doc else envelope.arrival_ts
    return SensorReading(
        acp_id=acp_id,
        acp_ts=ts,
        features=features,
        acp_type=doc.get("acp_type") or doc.get("type"),
        acp_event=doc.get("acp_event"),
        acp_event_value=doc.get("acp_event_value"),
        acp_confidence=doc.get("acp_confidence"),
    )


class Intake:
    """Owns the channels, the raw archive and the handoff queue."""

    def __init__(
        self,
        cfg: IngestConfig,
        data_root: Path | str,
        queue: "asyncio.Queue[SensorReading]",
        decoders: Optional[dict[str, Decoder]] = None,
    ):
        self.cfg = cfg
        self.data_root = Path(data_root)
        self.raw_dir = self.data_root / "raw"
        self.quarantine_dir = self.data_root / "quarantine"
        self.queue = queue
        self.decoders = decoders or {}
        self.counters = IngestCounters()
        self.channels: dict[str, Any] = {}

    async def start(self) -> None:
        if not self.cfg.tcp_bind and not self.cfg.mqtt.url:
            raise IntakeError("intake config names no channels (tcp_bind and mqtt.url both empty)")
        if self.cfg.tcp_bind:
            channel = TcpLineChannel(self, self.cfg.tcp_bind)
            await channel.start()
            self.channels["tcp_test"] = channel
        if self.cfg.mqtt.url:
            channel = MqttChannel(self, self.cfg.mqtt, self.cfg.backoff_base_s, self.cfg.backoff_cap_s)
            channel.start()
            self.channels["mqtt"] = channel

    async def stop(self) -> None:
        for channel in self.channels.values():
            await channel.stop()
        self.channels.clear()

    def status(self) -> dict:
        return {
            "channels": {name: ch.status() for name, ch in self.channels.items()},
            "counters": self.counters.as_dict(),
        }

    # -- per-message path ----------------------------------------------------

    async def on_message(self, envelope: RawEnvelope) -> IngestOutcome:
        outcome = IngestOutcome()
        self.counters.received += 1
        if len(envelope.payload) > self.cfg.max_payload_bytes:
            self.counters.oversized_dropped += 1
            outcome.reason = "oversized"
            return outcome
        try:
            outcome.archive_path = self.archive_raw(envelope)
            outcome.archived = True
            self.counters.archived += 1
        except OSError as exc:
            self.counters.archive_errors += 1
            outcome.reason = f"archive failed: {exc}"
            logger.error("raw archive write failed for %s: %s", envelope.topic, exc)
        reading = self.decode_payload(envelope)
        if reading is None:
            return outcome
        outcome.decoded = True
        self.counters.decoded += 1
        await self.queue.put(reading)
        outcome.enqueued = True
        self.counters.enqueued += 1
        return outcome

    def archive_raw(self, envelope: RawEnvelope) -> Path:
        """data/raw/<YYYY-MM-DD>/<sanitized-topic>_<micros>.bin, deduped with -<n>."""
        day = envelope.arrival_ts.date_utc().isoformat()
        stem = f"{sanitize_name(envelope.topic)}_{envelope.arrival_ts.micros}"
        day_dir = self.raw_dir / day
        day_dir.mkdir(parents=True, exist_ok=True)
        path = day_dir / f"{stem}.bin"
        n = 0
        while path.exists():
            n += 1
            path = day_dir / f"{stem}-{n}.bin"
        path.write_bytes(envelope.payload)
        return path

    def decode_payload(self, envelope: RawEnvelope) -> Optional[SensorReading]:
        """Decode via the type registry (default: pass-through JSON reading).

        Undecodable payloads are quarantined, never raised.
        """
        try:
            doc = json.loads(envelope.payload.decode("utf-8"))
            if not isinstance(doc, dict):
                raise ModelError("payload: not a JSON object")
            kind = doc.get("acp_type") or doc.get("type")
            decoder = self.decoders.get(kind, _default_decode) if kind else _default_decode
            return decoder(doc, envelope)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            self._quarantine(envelope, f"not UTF-8 JSON: {exc}")
        except (ModelError, ValueError) as exc:
            self._quarantine(envelope, str(exc))
        return None

    def _quarantine(self, envelope: RawEnvelope, reason: str) -> None:
        self.counters.quarantined += 1
        self.quarantine_dir.mkdir(parents=True, exist_ok=True)
        path = self.quarantine_dir / f"{envelope.arrival_ts.date_utc().isoformat()}.jsonl"
        record = {
            "arrival_ts": envelope.arrival_ts.wire(),
            "topic": envelope.topic,
            "reason": reason,
            "payload_base64": base64.b64encode(envelope.payload).decode("ascii"),
        }
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")


# ---------------------------------------------------------------------------
# TCP test channel
# ---------------------------------------------------------------------------

class TcpLineChannel:
    """Newline-delimited JSON over TCP; one reading per line.

    Lines beyond the stream limit close that client connection (the limit
    sits above the per-message payload cap, which is enforced separately).
    """

    def __init__(self, intake: Intake, bind: str):
        self.intake = intake
        host, _, port = bind.rpartition(":")
        if not host or not port.isdigit():
            raise IntakeError(f"tcp_bind: expected host:port, got {bind!r}")
        self.host, self.port = host, int(port)
        self._server: Optional[asyncio.base_events.Server] = None
        self.connections = 0

    async def start(self) -> None:
        limit = max(self.intake.cfg.max_payload_bytes * 2, 1 << 20)
        self._server = await asyncio.start_server(
            self._handle, self.host, self.port, limit=limit
        )
        bound = self._server.sockets[0].getsockname()
        self.port = bound[1]
        logger.info("tcp_test channel listening on %s:%d", self.host, self.port)

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None

    def status(self) -> dict:
        live = self._server is not None and self._server.is_serving()
        return {"state": "live" if live else "stopped", "bind": f"{self.host}:{self.port}",
                "connections": self.connections}

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        self.connections += 1
        try:
            while True:
                try:
                    line = await reader.readline()
                except (asyncio.LimitOverrunError, ValueError):
                    self.intake.counters.oversized_dropped += 1
                    logger.warning("tcp_test: line over stream limit, closing connection")
                    break
                if not line:
                    break
                line = line.strip()
                if not line:
                    continue
                envelope = RawEnvelope(
                    source="tcp_test",
                    topic="tcp_test",
                    payload=line,
                    arrival_ts=Timestamp.now(),
                )
                await self.intake.on_message(envelope)
        finally:
            self.connections -= 1
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass


# ---------------------------------------------------------------------------
# MQTT subscriber channel (minimal MQTT 3.1.1 client)
# ---------------------------------------------------------------------------

_CONNECT = 0x10
_CONNACK = 0x20
_PUBLISH = 0x30
_PUBACK = 0x40
_SUBSCRIBE = 0x82
_SUBACK = 0x90
_PINGREQ = 0xC0
_PINGRESP = 0xD0
_DISCONNECT = 0xE0


def _encode_varint(n: int) -> bytes:
    out = bytearray()
    while True:
        byte = n % 128
        n //= 128
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _utf8(s: str) -> bytes:
    data = s.encode("utf-8")
    return len(data).to_bytes(2, "big") + data


def _connect_packet(client_id: str, keepalive_s: int) -> bytes:
    var = _utf8("MQTT") + bytes([0x04, 0x02]) + keepalive_s.to_bytes(2, "big")
    payload = _utf8(client_id)
    body = var + payload
    return bytes([_CONNECT]) + _encode_varint(len(body)) + body


def _subscribe_packet(packet_id: int, topic_filter: str) -> bytes:
    body = packet_id.to_bytes(2, "big") + _utf8(topic_filter) + b"\x00"
    return bytes([_SUBSCRIBE]) + _encode_varint(len(body)) + body


async def _read_packet(reader: asyncio.StreamReader) -> tuple[int, bytes]:
    header = await reader.readexactly(1)
    length = 0
    shift = 1
    for _ in range(4):
        byte = (await reader.readexactly(1))[0]
        length += (byte & 0x7F) * shift
        if not byte & 0x80:
            break
        shift *= 128
    else:
        raise ConnectionError("mqtt: malformed remaining length")
    body = await reader.readexactly(length) if length else b""
    return header[0], body


def parse_mqtt_url(url: str) -> tuple[str, int]:
    hostport = url[len("mqtt://"):] if url.startswith("mqtt://") else url
    host, _, port = hostport.rpartition(":")
    if not host:
        host, port = hostport, "1883"
    return host, int(port)


class MqttChannel:
    """Subscribes to a broker and feeds PUBLISH payloads into the intake.

    An unreachable broker is never fatal: the channel retries with bounded
    exponential backoff and reports its state through the health status.
    """

    def __init__(self, intake: Intake, cfg, backoff_base_s: float, backoff_cap_s: float):
        self.intake = intake
        self.cfg = cfg
        self.host, self.port = parse_mqtt_url(cfg.url)
        self.backoff_base_s = backoff_base_s
        self.backoff_cap_s = backoff_cap_s
        self.state = "connecting"
        self.retries = 0
        self.last_error: Optional[str] = None
        self._task: Optional[asyncio.Task] = None
        self._writer: Optional[asyncio.StreamWriter] = None
        self._write_lock = asyncio.Lock()

    def start(self) -> None:
        self._task = asyncio.get_running_loop().create_task(self._run())

    async def stop(self) -> None:
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass
            self._task = None
        await self._close_writer(send_disconnect=True)
        self.state = "stopped"

    def status(self) -> dict:
        return {
            "state": self.state,
            "broker": f"{self.host}:{self.port}",
            "topic": self.cfg.topic,
            "retries": self.retries,
            "last_error": self.last_error,
        }

    async def _close_writer(self, send_disconnect: bool = False) -> None:
        if self._writer is None:
            return
        writer, self._writer = self._writer, None
        try:
            if send_disconnect:
                writer.write(bytes([_DISCONNECT, 0]))
                await writer.drain()
        except (ConnectionError, OSError):
            pass
        writer.close()
        try:
            await writer.wait_closed()
        except (ConnectionError, OSError):
            pass

    async def _write(self, data: bytes) -> None:
        async with self._write_lock:
            if self._writer is None:
                return
            self._writer.write(data)
            await self._writer.drain()

    async def _run(self) -> None:
        attempt = 0
        while True:
            try:
                await self._session()
                attempt = 0
            except asyncio.CancelledError:
                raise
            except (ConnectionError, OSError, asyncio.IncompleteReadError) as exc:
                self.last_error = str(exc) or exc.__class__.__name__
                self.state = "retrying"
                self.retries += 1
                delay = min(self.backoff_cap_s, self.backoff_base_s * (2 ** attempt))
                attempt += 1
                logger.warning("mqtt: %s; reconnecting in %.1fs", self.last_error, delay)
                await asyncio.sleep(delay)
            finally:
                await self._close_writer()

    async def _session(self) -> None:
        self.state = "connecting"
        reader, writer = await asyncio.open_connection(self.host, self.port)
        self._writer = writer
        await self._write(_connect_packet(self.cfg.client_id, self.cfg.keepalive_s))
        ptype, body = await _read_packet(reader)
        if ptype & 0xF0 != _CONNACK or len(body) < 2 or body[1] != 0:
            raise ConnectionError(f"mqtt: connect refused (packet {ptype:#x})")
        await self._write(_subscribe_packet(1, self.cfg.topic))
        pinger = asyncio.get_running_loop().create_task(self._ping_loop())
        try:
            while True:
                ptype, body = await _read_packet(reader)
                kind = ptype & 0xF0
                if kind == _PUBLISH:
                    await self._on_publish(ptype, body)
                elif kind == _SUBACK:
                    self.state = "live"
                    logger.info("mqtt: subscribed to %s on %s:%d", self.cfg.topic, self.host, self.port)
                elif kind == _PINGRESP:
                    continue
        finally:
            pinger.cancel()

    async def _ping_loop(self) -> None:
        interval = max(self.cfg.keepalive_s / 2.0, 1.0)
        while True:
            await asyncio.sleep(interval)
            await self._write(bytes([_PINGREQ, 0]))

    async def _on_publish(self, ptype: int, body: bytes) -> None:
        qos = (ptype >> 1) & 0x03
        topic_len = int.from_bytes(body[:2], "big")
        topic = body[2:2 + topic_len].decode("utf-8", errors="replace")
        offset = 2 + topic_len
        if qos > 0:
            packet_id = body[offset:offset + 2]
            offset += 2
            await self._write(bytes([_PUBACK, 2]) + packet_id)
        envelope = RawEnvelope(
            source="mqtt",
            topic=topic,
            payload=body[offset:],
            arrival_ts=Timestamp.now(),
        )
        await self.intake.on_message(envelope)
