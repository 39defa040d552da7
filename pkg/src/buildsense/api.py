"""HTTP query surface and the websocket push endpoint.

Four read-only endpoint families over the store (building metadata,
rendered SVG floor plans, sensor metadata, readings) plus the rtmonitor
websocket. Mutations happen through ingestion and the seed-loader CLI; no
write API exists.
"""

from __future__ import annotations

import asyncio
import json
import logging
from typing import Optional, Union

from fastapi import APIRouter, FastAPI, Query, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response
from pydantic import ConfigDict

from .model import CrateRecord, SensorMetadataRecord, SensorReading, Timestamp
from .rtmonitor import CLOSE_SENTINEL, Session, connect_ok_frame, ping_frame
from .store import NotFound
from .svgplan import floor_svg

logger = logging.getLogger(__name__)


class CrateDoc(CrateRecord):
    """Crate wire document, optionally nesting children to the queried depth."""

    model_config = ConfigDict(populate_by_name=True)

    children: Optional[list["CrateDoc"]] = None


def _not_found(**body) -> JSONResponse:
    return JSONResponse({"error": "not found", **body}, status_code=404)


def _bad_request(message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=400)


def build_router(svc) -> APIRouter:
    router = APIRouter()

    @router.get("/bim/get/{crate_id}", response_model=CrateDoc,
                response_model_exclude_none=True)
    def bim_get(crate_id: str):
        return _crate_tree(crate_id, 0)

    @router.get("/bim/get/{crate_id}/{children}", response_model=CrateDoc,
                response_model_exclude_none=True)
    def bim_get_children(crate_id: str, children: str):
        try:
            depth = int(children)
        except ValueError:
            return _bad_request(f"children: expected an integer, got {children!r}")
        if depth < 0:
            return _bad_request("children: must be >= 0")
        return _crate_tree(crate_id, depth)

    def _crate_tree(crate_id: str, depth: int):
        try:
            return svc.metadata.get_crate(crate_id, depth)
        except NotFound:
            return _not_found(crate_id=crate_id)

    @router.get("/space/get_bim_floor_number/{floor}")
    def space_floor(floor: str):
        try:
            floor_number = int(floor)
        except ValueError:
            return _bad_request(f"floor: expected an integer, got {floor!r}")
        crates = svc.metadata.crates_on_floor(floor_number)
        svg = floor_svg(crates, floor_number, svc.cfg.svg.scale)
        return Response(content=svg, media_type="image/svg+xml")

    @router.get("/sensors/get/{acp_id}", response_model=SensorMetadataRecord,
                response_model_exclude_none=True)
    def sensors_get(acp_id: str):
        record = svc.metadata.get_sensor_or_none(acp_id)
        if record is None:
            return _not_found(acp_id=acp_id)
        return record

    @router.get("/sensors/bim/get/{crate_id}", response_model=list[SensorMetadataRecord],
                response_model_exclude_none=True)
    def sensors_in_crate(crate_id: str):
        try:
            return svc.metadata.sensors_in_crate(crate_id, recursive=True)
        except NotFound:
            return _not_found(crate_id=crate_id)

    @router.get("/readings/get/{acp_id}",
                response_model=Union[SensorReading, list[SensorReading]],
                response_model_exclude_none=True)
    def readings_get(
        acp_id: str,
        from_ts: Optional[str] = Query(default=None, alias="from"),
        to_ts: Optional[str] = Query(default=None, alias="to"),
    ):
        if from_ts is None and to_ts is None:
            latest = svc.readings.latest(acp_id)
            if latest is None:
                return _not_found(acp_id=acp_id)
            return latest
        if from_ts is None or to_ts is None:
            return _bad_request("range queries need both from and to")
        try:
            t_from = Timestamp.coerce(from_ts)
            t_to = Timestamp.coerce(to_ts)
        except ValueError as exc:
            return _bad_request(str(exc))
        if t_from.micros > t_to.micros:
            return _bad_request("from: must be <= to")
        if not svc.readings.has_readings(acp_id):
            return _not_found(acp_id=acp_id)
        return svc.readings.range(acp_id, t_from, t_to)

    return router


def attach_rtmonitor(app: FastAPI, svc) -> None:
    cfg = svc.cfg.rtmonitor

    @app.get("/rtmonitor/status")
    def rtmonitor_status():
        return svc.registry.introspect()

    @app.websocket("/rtmonitor/WS")
    async def rtmonitor_ws(ws: WebSocket):
        await ws.accept()
        session = svc.registry.connect()
        session.queue.put_nowait(connect_ok_frame())
        sender = asyncio.get_running_loop().create_task(_sender(ws, session))
        pinger = asyncio.get_running_loop().create_task(_pinger(ws, session))
        try:
            while True:
                message = await ws.receive()
                if message["type"] == "websocket.disconnect":
                    break
                if message.get("bytes") is not None:
                    await ws.close(code=1003)
                    break
                try:
                    frame = json.loads(message.get("text") or "")
                    if not isinstance(frame, dict):
                        raise ValueError("not an object")
                except ValueError:
                    await ws.close(code=1002)
                    break
                _dispatch(session, frame)
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            pinger.cancel()
            svc.registry.disconnect(session)

    def _dispatch(session: Session, frame: dict) -> None:
        msg_type = frame.get("msg_type")
        if msg_type == "rt_subscribe":
            session.queue.put_nowait(svc.registry.subscribe(session, frame))
        elif msg_type == "rt_unsubscribe":
            session.queue.put_nowait(svc.registry.unsubscribe(session, frame.get("request_id")))
        elif msg_type == "rt_pong":
            session.missed_pongs = 0
        else:
            session.queue.put_nowait({
                "msg_type": "rt_error",
                "reason": "bad_message",
                "msg": str(msg_type),
            })

    async def _sender(ws: WebSocket, session: Session) -> None:
        try:
            while True:
                frame = await session.queue.get()
                if frame.pop(CLOSE_SENTINEL, None):
                    await ws.send_text(json.dumps(frame))
                    await ws.close(code=1013)
                    return
                await ws.send_text(json.dumps(frame))
        except (WebSocketDisconnect, RuntimeError):
            pass

    async def _pinger(ws: WebSocket, session: Session) -> None:
        try:
            while True:
                await asyncio.sleep(cfg.ping_interval_s)
                if session.missed_pongs >= cfg.max_missed_pongs:
                    await ws.close(code=1001)
                    return
                session.missed_pongs += 1
                try:
                    session.queue.put_nowait(ping_frame())
                except asyncio.QueueFull:
                    pass
        except (WebSocketDisconnect, RuntimeError):
            pass


def attach_health(app: FastAPI, svc) -> None:
    @app.get("/healthz")
    def healthz():
        return svc.health()
