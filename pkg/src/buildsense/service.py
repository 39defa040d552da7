"""Composition root: wires stores, pipeline, intake and the web app together."""

from __future__ import annotations

import asyncio
import logging
import time
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI
from fastapi.staticfiles import StaticFiles

from . import __version__
from .api import attach_health, attach_rtmonitor, build_router
from .config import AppConfig
from .ingest import Intake
from .model import RuleConfig, load_rules
from .rtmonitor import SubscriptionRegistry
from .store import MetadataStore, ReadingsRepository
from .streamproc import StreamProcessor

logger = logging.getLogger(__name__)


class Service:
    """The running platform: storage, subscription registry, pipeline, intake."""

    def __init__(self, cfg: AppConfig):
        self.cfg = cfg
        self.started_at = time.time()
        self.metadata = MetadataStore(cfg.storage.metadata_db)
        self.readings = ReadingsRepository(cfg.storage.root)
        self.registry = SubscriptionRegistry(buffer_size=cfg.rtmonitor.buffer_size)
        rules = self._load_rule_config()
        self.queue: "asyncio.Queue" = None  # created on the running loop
        self.processor = StreamProcessor(
            sensors=self.metadata.get_sensor_or_none,
            readings_repo=self.readings,
            push_sink=self.registry,
            rules=rules.rules,
            thresholds=rules.thresholds,
            default_event_ttl_s=cfg.stream.default_event_ttl_s,
        )
        self.intake: Intake = None

    def _load_rule_config(self) -> RuleConfig:
        if not self.cfg.stream.rules_file:
            return RuleConfig()
        rules = load_rules(self.cfg.stream.rules_file)
        logger.info("loaded %d rules, %d thresholds from %s",
                    len(rules.rules), len(rules.thresholds), self.cfg.stream.rules_file)
        return rules

    async def start(self) -> None:
        self.queue = asyncio.Queue(maxsize=self.cfg.ingest.queue_size)
        self.intake = Intake(self.cfg.ingest, self.cfg.storage.root, self.queue)
        self.processor.start(self.queue)
        await self.intake.start()
        logger.info("service started (data dir: %s)", self.cfg.storage.root)

    async def stop(self) -> None:
        if self.intake is not None:
            await self.intake.stop()
        if self.queue is not None:
            try:
                await asyncio.wait_for(self.queue.join(), timeout=10)
            except asyncio.TimeoutError:
                logger.warning("pipeline queue did not drain within 10s; %d left",
                               self.queue.qsize())
        await self.processor.stop()
        self.metadata.close()

    def health(self) -> dict:
        return {
            "status": "ok",
            "version": __version__,
            "uptime_s": round(time.time() - self.started_at, 3),
            "intake": self.intake.status() if self.intake else {},
            "pipeline": {
                **self.processor.counters.as_dict(),
                "out_of_order_dropped": self.processor.state.out_of_order_dropped,
                "queue_depth": self.queue.qsize() if self.queue else 0,
            },
            "storage": {
                "appends": self.readings.appends,
                "append_errors": self.readings.append_errors,
                **self.metadata.counts(),
            },
            "rtmonitor": self.registry.introspect(),
        }


def create_app(cfg: AppConfig | None = None) -> FastAPI:
    cfg = cfg or AppConfig()
    svc = Service(cfg)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        await svc.start()
        try:
            yield
        finally:
            await svc.stop()

    app = FastAPI(title="buildsense", version=__version__, lifespan=lifespan)
    app.state.service = svc
    app.include_router(build_router(svc), prefix=cfg.server.path_prefix.rstrip("/"))
    attach_rtmonitor(app, svc)
    attach_health(app, svc)

    ui_dir = Path(cfg.server.ui_dir) if cfg.server.ui_dir else Path("frontend/dist")
    if ui_dir.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
