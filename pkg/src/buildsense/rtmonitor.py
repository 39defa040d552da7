"""Token-based websocket subscriptions with live push.

Clients register filters under client-chosen request tokens; every item the
pipeline routes is evaluated against every live subscription and delivered
as an ``rt_data`` frame. Sessions own a bounded outbound queue so one slow
client can never stall the pipeline: on overflow the buffered backlog is
dropped and the client is disconnected with an ``rt_error``.

Wire vocabulary (all frames UTF-8 JSON):

    server -> client: rt_connect_ok, rt_subscribe_ok, rt_unsubscribe_ok,
                      rt_data, rt_ping, rt_error
    client -> server: rt_subscribe, rt_unsubscribe, rt_pong
"""

from __future__ import annotations

import asyncio
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any

from .model import (
    SUBSCRIPTION_FIELDS,
    FieldCondition,
    Timestamp,
    check_filter_fields,
)

logger = logging.getLogger(__name__)

CLOSE_SENTINEL = "__close__"


@dataclass
class Subscription:
    request_id: str
    filters: list[FieldCondition]

    def matches(self, item: Any) -> bool:
        return all(cond.matches(item) for cond in self.filters)


@dataclass
class Session:
    session_id: str
    queue: "asyncio.Queue[dict]"
    subscriptions: dict[str, Subscription] = field(default_factory=dict)
    missed_pongs: int = 0
    overflowed: bool = False
    pushed: int = 0


class SubscriptionRegistry:
    """All live sessions and their filters; evaluation happens inline."""

    def __init__(self, buffer_size: int = 1000):
        self.buffer_size = buffer_size
        self.sessions: dict[str, Session] = {}
        self._ids = itertools.count(1)
        self.pushed_total = 0
        self.overflows = 0

    def connect(self) -> Session:
        session = Session(
            session_id=f"s{next(self._ids)}",
            queue=asyncio.Queue(maxsize=self.buffer_size),
        )
        self.sessions[session.session_id] = session
        return session

    def disconnect(self, session: Session) -> None:
        self.sessions.pop(session.session_id, None)
        session.subscriptions.clear()

    def subscribe(self, session: Session, request: dict) -> dict:
        request_id = request.get("request_id")
        if not isinstance(request_id, str) or not request_id:
            return {"msg_type": "rt_error", "request_id": request_id, "reason": "bad_request_id"}
        if request_id in session.subscriptions:
            return {"msg_type": "rt_error", "request_id": request_id, "reason": "duplicate"}
        try:
            filters = [FieldCondition.model_validate(f) for f in request.get("filters", [])]
        except Exception:
            return {"msg_type": "rt_error", "request_id": request_id, "reason": "bad_filter"}
        bad = check_filter_fields(filters, SUBSCRIPTION_FIELDS)
        if bad is not None:
            return {"msg_type": "rt_error", "request_id": request_id, "reason": "bad_filter",
                    "field": bad}
        session.subscriptions[request_id] = Subscription(request_id, filters)
        return {"msg_type": "rt_subscribe_ok", "request_id": request_id}

    def unsubscribe(self, session: Session, request_id: Any) -> dict:
        if request_id in session.subscriptions:
            del session.subscriptions[request_id]
            return {"msg_type": "rt_unsubscribe_ok", "request_id": request_id}
        return {"msg_type": "rt_error", "request_id": request_id, "reason": "unknown_request_id"}

    def match_and_push(self, item: Any, doc: dict) -> int:
        """Evaluate one routed item against every subscription; returns matches.

        Runs on the pipeline lane and never blocks: frames are enqueued with
        put_nowait and a full queue triggers the overflow teardown for that
        session alone.
        """
        matched = 0
        now = Timestamp.now().wire()
        for session in list(self.sessions.values()):
            if session.overflowed:
                continue
            for sub in session.subscriptions.values():
                if not sub.matches(item):
                    continue
                matched += 1
                frame = {
                    "msg_type": "rt_data",
                    "request_id": sub.request_id,
                    "ts": now,
                    "request_data": [doc],
                }
                try:
                    session.queue.put_nowait(frame)
                    session.pushed += 1
                    self.pushed_total += 1
                except asyncio.QueueFull:
                    self._overflow(session)
                    break
        return matched

    def _overflow(self, session: Session) -> None:
        session.overflowed = True
        self.overflows += 1
        logger.warning("session %s overflowed; disconnecting", session.session_id)
        # Drop the backlog so the close frame is the next thing sent.
        while not session.queue.empty():
            try:
                session.queue.get_nowait()
            except asyncio.QueueEmpty:
                break
        session.queue.put_nowait({
            CLOSE_SENTINEL: True,
            "msg_type": "rt_error",
            "reason": "overflow",
        })

    def introspect(self) -> dict:
        return {
            "sessions": [
                {
                    "session_id": s.session_id,
                    "tokens": sorted(s.subscriptions.keys()),
                    "queued": s.queue.qsize(),
                    "pushed": s.pushed,
                }
                for s in self.sessions.values()
            ],
            "pushed_total": self.pushed_total,
            "overflows": self.overflows,
        }


def connect_ok_frame() -> dict:
    return {"msg_type": "rt_connect_ok", "ts": Timestamp.now().wire()}


def ping_frame() -> dict:
    return {"msg_type": "rt_ping", "ts": Timestamp.now().wire()}
