"""Brute-force derived-event oracle for testing the streaming engine.

Deliberately shares nothing with the streaming implementation beyond the
domain model: events are materialized up front, sorted by (acp_ts, arrival),
and scanned forward with an exhaustive backward search for each potential
chain completion. Semantics match the streaming engine by construction:
greedy latest-predecessor selection, closed containment windows, consumption
of constituents, at most one emission per rule per completing event.
"""

from __future__ import annotations

from .model import (
    DerivedEvent,
    EventRule,
    SensorReading,
    SimpleEvent,
    ThresholdSpec,
    build_derived_event,
    simple_events_for,
)


def simple_events_of_trace(
    readings: list[SensorReading],
    thresholds: list[ThresholdSpec],
    default_event_ttl_s: float = 300.0,
) -> list[SimpleEvent]:
    events: list[SimpleEvent] = []
    for reading in readings:
        events.extend(simple_events_for(reading, thresholds, default_event_ttl_s))
    return events


def oracle_detect(events: list[SimpleEvent], rules: list[EventRule]) -> list[DerivedEvent]:
    """Exhaustive enumeration over a full trace of simple events."""
    order = sorted(range(len(events)), key=lambda i: (events[i].acp_ts.micros, i))
    ordered = [events[i] for i in order]
    consumed: list[set[int]] = [set() for _ in rules]
    out: list[DerivedEvent] = []

    for j, event in enumerate(ordered):
        for rule_idx, rule in enumerate(rules):
            if not rule.steps[-1].matches(event):
                continue
            chain_idx = _search_chain(ordered, consumed[rule_idx], rule, j)
            if chain_idx is None:
                continue
            chain = [ordered[k] for k in chain_idx]
            out.append(build_derived_event(rule, chain))
            consumed[rule_idx].update(chain_idx)
    return out


def _search_chain(
    ordered: list[SimpleEvent],
    consumed: set[int],
    rule: EventRule,
    j: int,
) -> list[int] | None:
    """Greedy backward walk from the completing event at position j."""
    chain_idx = [j]
    next_ts = ordered[j].acp_ts.micros
    for step_idx in range(len(rule.steps) - 2, -1, -1):
        step = rule.steps[step_idx]
        ttl = step.ttl_micros
        found = None
        for k in range(j - 1, -1, -1):
            ts = ordered[k].acp_ts.micros
            if ts > next_ts:
                continue
            if ts + ttl < next_ts:
                # Sorted order: every earlier event has ts' <= ts, so its
                # window ends even sooner. Nothing further back can contain
                # next_ts.
                break
            if k in consumed or k in chain_idx:
                continue
            if step.matches(ordered[k]):
                found = k
                break
        if found is None:
            return None
        chain_idx.append(found)
        next_ts = ordered[found].acp_ts.micros
    chain_idx.reverse()
    return chain_idx


def derive_from_readings(
    readings: list[SensorReading],
    rules: list[EventRule],
    thresholds: list[ThresholdSpec],
    default_event_ttl_s: float = 300.0,
) -> list[DerivedEvent]:
    """Full oracle pipeline: readings -> simple events -> derived events."""
    return oracle_detect(
        simple_events_of_trace(readings, thresholds, default_event_ttl_s), rules
    )
