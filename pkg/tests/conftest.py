import json
import random
import socket
import subprocess
import sys
import time
from pathlib import Path

import httpx
import pytest

from buildsense.config import AppConfig
from buildsense.fleetgen import demo_sensor, seed_crates
from buildsense.model import BoundaryPolygon, CrateRecord, LocationRef, Timestamp


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def wait_until(predicate, timeout=10.0, interval=0.02, message="condition"):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return
        time.sleep(interval)
    raise TimeoutError(f"timed out waiting for {message}")


def send_tcp_lines(port: int, payloads: list[dict], host: str = "127.0.0.1") -> None:
    """Push newline-delimited JSON readings into a live ingest channel."""
    with socket.create_connection((host, port), timeout=10) as sock:
        for payload in payloads:
            sock.sendall(json.dumps(payload).encode() + b"\n")


@pytest.fixture
def app_config(tmp_path) -> AppConfig:
    cfg = AppConfig()
    cfg.storage.data_dir = str(tmp_path / "data")
    cfg.ingest.tcp_bind = "127.0.0.1:0"
    cfg.ingest.mqtt.url = ""
    return cfg


def seed_store(metadata_store) -> None:
    for crate in seed_crates():
        metadata_store.put_crate(crate)
    metadata_store.put_sensor(demo_sensor())


def make_crate(crate_id, parent=None, crate_type="room", floor=0, x=0.0, y=0.0):
    return CrateRecord(
        crate_id=crate_id,
        parent_crate_id=parent,
        crate_type=crate_type,
        acp_location=LocationRef(system="B", x=x, y=y, f=floor),
        acp_boundary=BoundaryPolygon.model_validate([[0, 0], [0, 10], [10, 10], [10, 0]]),
        acp_ts=Timestamp.parse("100.000000"),
    )


def random_hierarchy(rng: random.Random, size: int) -> list[CrateRecord]:
    """Random tree: parents always created before children."""
    crates = [make_crate("root0", crate_type="building")]
    for i in range(1, size):
        parent = rng.choice(crates)
        kind = rng.choice(["floor", "room", "room", "other"])
        crates.append(make_crate(f"c{i:03d}", parent=parent.crate_id, crate_type=kind,
                                 floor=rng.randint(0, 3)))
    return crates


def brute_force_tree(records: list[CrateRecord], root_id: str, depth) -> dict:
    """Transitive-closure oracle for get_crate, independent of the store."""
    by_parent: dict[str, list[CrateRecord]] = {}
    for r in records:
        if r.parent_crate_id:
            by_parent.setdefault(r.parent_crate_id, []).append(r)
    root = next(r for r in records if r.crate_id == root_id)

    def build(record: CrateRecord, d) -> dict:
        doc = record.wire_doc()
        if d == 0:
            return doc
        nxt = None if d is None else d - 1
        kids = sorted(by_parent.get(record.crate_id, []), key=lambda r: r.crate_id)
        doc["children"] = [build(k, nxt) for k in kids]
        return doc

    return build(root, depth)


@pytest.fixture
def test_service(app_config):
    """In-process service behind a starlette TestClient, lifespan running."""
    from starlette.testclient import TestClient

    from buildsense.service import create_app

    app = create_app(app_config)
    with TestClient(app) as client:
        svc = app.state.service
        yield svc, client


def tcp_port_of(svc) -> int:
    return svc.intake.channels["tcp_test"].port


class ServerProcess:
    """A real `buildsense serve` subprocess on ephemeral ports."""

    def __init__(self, tmp_path: Path, rules: dict | None = None,
                 overrides: dict | None = None):
        self.http_port = free_port()
        self.tcp_port = free_port()
        self.data_dir = tmp_path / "data"
        cfg = AppConfig()
        cfg.server.port = self.http_port
        cfg.storage.data_dir = str(self.data_dir)
        cfg.ingest.tcp_bind = f"127.0.0.1:{self.tcp_port}"
        if rules is not None:
            rules_path = tmp_path / "rules.json"
            rules_path.write_text(json.dumps(rules))
            cfg.stream.rules_file = str(rules_path)
        if overrides:
            for section, values in overrides.items():
                target = getattr(cfg, section)
                for key, value in values.items():
                    setattr(target, key, value)
        self.config_path = tmp_path / "config.yaml"
        cfg.dump(str(self.config_path))
        self.cfg = cfg
        self.proc: subprocess.Popen | None = None

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.http_port}"

    @property
    def ws_url(self) -> str:
        return f"ws://127.0.0.1:{self.http_port}/rtmonitor/WS"

    def cli(self, *args: str, timeout: float = 120) -> subprocess.CompletedProcess:
        return subprocess.run(
            [sys.executable, "-m", "buildsense", "--config", str(self.config_path), *args],
            capture_output=True, text=True, timeout=timeout,
        )

    def start(self) -> "ServerProcess":
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "buildsense", "--config", str(self.config_path), "serve"],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
        )
        deadline = time.monotonic() + 30
        while time.monotonic() < deadline:
            if self.proc.poll() is not None:
                raise RuntimeError(f"server exited early:\n{self.proc.stderr.read()}")
            try:
                if httpx.get(f"{self.base_url}/healthz", timeout=1).status_code == 200:
                    return self
            except httpx.HTTPError:
                time.sleep(0.1)
        raise TimeoutError("server did not become healthy")

    def health(self) -> dict:
        return httpx.get(f"{self.base_url}/healthz", timeout=5).json()

    def stop(self) -> None:
        if self.proc is not None and self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait(timeout=5)
        self.proc = None


@pytest.fixture
def server_process(tmp_path):
    started: list[ServerProcess] = []

    def _launch(rules: dict | None = None, overrides: dict | None = None) -> ServerProcess:
        server = ServerProcess(tmp_path, rules=rules, overrides=overrides)
        started.append(server)
        return server.start()

    yield _launch
    for server in started:
        server.stop()
