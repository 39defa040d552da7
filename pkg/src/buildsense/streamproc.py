"""Stream processing: enrich readings, detect events, fan out to sinks.

Derived-event detection follows chain semantics: a rule with steps
s1..sn fires when the incoming event matches sn and stored candidates
e1..e(n-1) match the earlier steps with each next timestamp inside the
previous event's timeliness window (closed at both ends). Selection is
greedy latest-predecessor, constituents are consumed on emission, and at
most one derived event per rule fires per completing event.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

from .model import (
    DerivedEvent,
    EventRule,
    SensorMetadataRecord,
    SensorReading,
    SimpleEvent,
    ThresholdSpec,
    Timestamp,
    build_derived_event,
    simple_events_for,
)

logger = logging.getLogger(__name__)

SensorLookup = Callable[[str], Optional[SensorMetadataRecord]]


def enrich(reading: SensorReading, sensors: SensorLookup) -> SensorReading:
    """Embed sensor metadata so the reading is self-contained downstream.

    Unknown sensors pass through unchanged apart from the ``unregistered``
    flag. Idempotent: enriching twice yields the same record.
    """
    meta = sensors(reading.acp_id)
    if meta is None:
        return reading.model_copy(update={"unregistered": True})
    return reading.model_copy(update={
        "acp_type": meta.acp_type,
        "acp_location": meta.acp_location,
        "parent_crate_id": meta.parent_crate_id,
        "unregistered": False,
    })


def detect_simple(
    reading: SensorReading,
    specs: list[ThresholdSpec],
    default_event_ttl_s: float = 300.0,
) -> list[SimpleEvent]:
    return simple_events_for(reading, specs, default_event_ttl_s)


# ---------------------------------------------------------------------------
# Derived-event rule engine
# ---------------------------------------------------------------------------

@dataclass
class _Candidate:
    event: SimpleEvent
    window_end_micros: int   # candidate ts + its own step ttl (containment bound)
    dead_after_micros: int   # latest final-step ts any chain through it can have


class RuleEngineState:
    """Per-rule, per-step rings of unconsumed candidates, pruned as time advances.

    A candidate at step i stays live while some future completing event could
    still chain through it, i.e. while ts_i + ttl_i + ... + ttl_(n-2) has not
    fallen behind the newest timestamp seen.
    """

    def __init__(self, rules: list[EventRule]):
        self.rules = rules
        # rings[rule_index][step_index] holds candidates in arrival order;
        # only steps 0..n-2 are ever populated.
        self.rings: list[list[list[_Candidate]]] = [
            [[] for _ in rule.steps] for rule in rules
        ]
        # suffix_windows[rule_index][i] = sum of ttls for the chain hops from
        # step i up to the final step.
        self.suffix_windows: list[list[int]] = []
        for rule in rules:
            ttls = [step.ttl_micros for step in rule.steps]
            suffix = [0] * len(ttls)
            acc = 0
            for i in range(len(ttls) - 2, -1, -1):
                acc += ttls[i]
                suffix[i] = acc
            self.suffix_windows.append(suffix)
        self.max_seen: Optional[Timestamp] = None
        self.retention_micros = max((r.window_micros for r in rules), default=0)
        self.out_of_order_dropped = 0

    def prune(self) -> None:
        if self.max_seen is None:
            return
        horizon = self.max_seen.micros
        for rule_rings in self.rings:
            for ring in rule_rings:
                if ring and ring[0].dead_after_micros < horizon:
                    ring[:] = [c for c in ring if c.dead_after_micros >= horizon]

    def live_candidates(self) -> int:
        return sum(len(ring) for rule_rings in self.rings for ring in rule_rings)


def detect_derived(
    event: SimpleEvent,
    state: RuleEngineState,
    rules: Optional[list[EventRule]] = None,
) -> list[DerivedEvent]:
    """Feed one event (non-decreasing acp_ts order) and collect completions.

    Out-of-order events older than the retention window are dropped and
    counted; stragglers inside the window are matched best-effort against
    whatever candidates remain.
    """
    rules = state.rules if rules is None else rules
    ts = event.acp_ts
    if state.max_seen is not None and ts.micros < state.max_seen.micros - state.retention_micros:
        state.out_of_order_dropped += 1
        return []
    if state.max_seen is None or ts.micros > state.max_seen.micros:
        state.max_seen = ts
    state.prune()

    out: list[DerivedEvent] = []
    for rule_idx, rule in enumerate(rules):
        rings = state.rings[rule_idx]
        emitted = False
        if rule.steps[-1].matches(event):
            chain = _complete_chain(rule, rings, event)
            if chain is not None:
                out.append(build_derived_event(rule, chain))
                _consume(rings, chain)
                emitted = True
        if not emitted:
            suffix = state.suffix_windows[rule_idx]
            for step_idx, step in enumerate(rule.steps[:-1]):
                if step.matches(event):
                    rings[step_idx].append(_Candidate(
                        event,
                        ts.micros + step.ttl_micros,
                        ts.micros + suffix[step_idx],
                    ))
    return out


def _complete_chain(
    rule: EventRule,
    rings: list[list[_Candidate]],
    final_event: SimpleEvent,
) -> Optional[list[SimpleEvent]]:
    """Greedy latest-predecessor backward walk; None when any step has no match."""
    chain = [final_event]
    next_ts = final_event.acp_ts.micros
    for step_idx in range(len(rule.steps) - 2, -1, -1):
        ring = rings[step_idx]
        picked: Optional[SimpleEvent] = None
        for cand in reversed(ring):
            if cand.event.acp_ts.micros > next_ts:
                continue
            if cand.window_end_micros < next_ts:
                # Ring is in arrival (hence timestamp) order and the window
                # width is fixed per step, so earlier candidates fail too.
                break
            if any(cand.event is e for e in chain):
                continue
            picked = cand.event
            break
        if picked is None:
            return None
        chain.append(picked)
        next_ts = picked.acp_ts.micros
    chain.reverse()
    return chain


def _consume(rings: list[list[_Candidate]], chain: list[SimpleEvent]) -> None:
    for ring in rings:
        if ring:
            ring[:] = [c for c in ring if not any(c.event is e for e in chain)]


# ---------------------------------------------------------------------------
# Fan-out
# ---------------------------------------------------------------------------

@dataclass
class FanoutReport:
    store_ok: bool = True
    push_ok: bool = True
    matched: int = 0
    error: Optional[str] = None


@dataclass
class PipelineCounters:
    processed: int = 0
    simple_events: int = 0
    derived_events: int = 0
    store_errors: int = 0
    unregistered: int = 0

    def as_dict(self) -> dict:
        return dict(vars(self))


class StreamProcessor:
    """Single ordered lane: enrich, detect, route to storage and push sinks.

    Storage failures never block the push path; they are counted and the
    per-item fanout report records them.
    """

    def __init__(
        self,
        sensors: SensorLookup,
        readings_repo,
        push_sink,
        rules: Optional[list[EventRule]] = None,
        thresholds: Optional[list[ThresholdSpec]] = None,
        default_event_ttl_s: float = 300.0,
    ):
        self.sensors = sensors
        self.readings_repo = readings_repo
        self.push_sink = push_sink
        self.thresholds = thresholds or []
        self.state = RuleEngineState(rules or [])
        self.default_event_ttl_s = default_event_ttl_s
        self.counters = PipelineCounters()
        self._task: Optional[asyncio.Task] = None

    def process(self, reading: SensorReading) -> list[FanoutReport]:
        reading = enrich(reading, self.sensors)
        if reading.unregistered:
            self.counters.unregistered += 1
        reports = [self.route(reading)]
        events = detect_simple(reading, self.thresholds, self.default_event_ttl_s)
        self.counters.simple_events += len(events)
        for event in events:
            reports.append(self.route(event))
            for derived in detect_derived(event, self.state):
                self.counters.derived_events += 1
                reports.append(self.route(derived))
        self.counters.processed += 1
        return reports

    def route(self, item: Union[SensorReading, SimpleEvent, DerivedEvent]) -> FanoutReport:
        report = FanoutReport()
        doc = item.wire_doc()
        try:
            if isinstance(item, SensorReading):
                self.readings_repo.append(item)
            else:
                self.readings_repo.append_event(doc, item.acp_ts)
        except OSError as exc:
            report.store_ok = False
            report.error = str(exc)
            self.counters.store_errors += 1
            logger.error("storage append failed: %s", exc)
        try:
            report.matched = self.push_sink.match_and_push(item, doc)
        except Exception as exc:  # push must never kill the lane
            report.push_ok = False
            report.error = str(exc)
            logger.exception("push sink failed")
        return report

    # -- queue-driven lane ---------------------------------------------------

    def start(self, queue: "asyncio.Queue[SensorReading]") -> None:
        self._task = asyncio.get_running_loop().create_task(self._run(queue))

    async def stop(self) -> None:
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass
            self._task = None

    async def _run(self, queue: "asyncio.Queue[SensorReading]") -> None:
        while True:
            reading = await queue.get()
            try:
                self.process(reading)
            except Exception:
                logger.exception("pipeline failed on reading from %s", reading.acp_id)
            finally:
                queue.task_done()
