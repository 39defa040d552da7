"""Structured configuration shared by the server and the CLI harness."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8800
    path_prefix: str = "/api"
    ui_dir: str = ""              # "" auto-detects ./frontend/dist


@dataclass
class MqttConfig:
    url: str = ""                 # e.g. "mqtt://localhost:1883"
    topic: str = "acp/#"
    client_id: str = "buildsense-intake"
    keepalive_s: int = 30


@dataclass
class IngestConfig:
    tcp_bind: str = "127.0.0.1:8810"   # "" disables the TCP test channel
    mqtt: MqttConfig = field(default_factory=MqttConfig)
    queue_size: int = 10_000
    max_payload_bytes: int = 256 * 1024
    backoff_base_s: float = 1.0
    backoff_cap_s: float = 60.0


@dataclass
class StorageConfig:
    data_dir: str = "data"

    @property
    def root(self) -> Path:
        return Path(self.data_dir)

    @property
    def metadata_db(self) -> Path:
        return self.root / "metadata.db"


@dataclass
class StreamConfig:
    rules_file: str = ""               # "" means no rules/thresholds loaded
    default_event_ttl_s: float = 300.0


@dataclass
class RtmonitorConfig:
    buffer_size: int = 1000
    ping_interval_s: float = 30.0
    max_missed_pongs: int = 3


@dataclass
class SvgConfig:
    scale: float = 6.608


@dataclass
class AppConfig:
    server: ServerConfig = field(default_factory=ServerConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    storage: StorageConfig = field(default_factory=StorageConfig)
    stream: StreamConfig = field(default_factory=StreamConfig)
    rtmonitor: RtmonitorConfig = field(default_factory=RtmonitorConfig)
    svg: SvgConfig = field(default_factory=SvgConfig)

    @classmethod
    def load(cls, path: Optional[str]) -> "AppConfig":
        """Load YAML config; missing file or sections fall back to defaults."""
        cfg = cls()
        if not path:
            return cfg
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "AppConfig":
        cfg = cls()
        for section_name, target in (
            ("server", cfg.server),
            ("ingest", cfg.ingest),
            ("storage", cfg.storage),
            ("stream", cfg.stream),
            ("rtmonitor", cfg.rtmonitor),
            ("svg", cfg.svg),
        ):
            section = raw.get(section_name) or {}
            for key, value in section.items():
                if key == "mqtt" and section_name == "ingest":
                    for mk, mv in (value or {}).items():
                        if hasattr(cfg.ingest.mqtt, mk):
                            setattr(cfg.ingest.mqtt, mk, mv)
                    continue
                if hasattr(target, key):
                    setattr(target, key, value)
        return cfg

    def to_dict(self) -> dict:
        return {
            "server": vars(self.server),
            "ingest": {**{k: v for k, v in vars(self.ingest).items() if k != "mqtt"},
                       "mqtt": vars(self.ingest.mqtt)},
            "storage": vars(self.storage),
            "stream": vars(self.stream),
            "rtmonitor": vars(self.rtmonitor),
            "svg": vars(self.svg),
        }

    def dump(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)
