import asyncio
import json
from contextlib import contextmanager

import pytest
from starlette.testclient import TestClient, WebSocketDisconnect

from buildsense import fleetgen
from buildsense.model import FieldCondition, SensorReading, Timestamp
from buildsense.rtmonitor import SubscriptionRegistry
from buildsense.service import create_app

from conftest import seed_store, send_tcp_lines, tcp_port_of, wait_until

WS = "/rtmonitor/WS"


@contextmanager
def service_client(app_config, rules: dict | None = None, tmp_path=None, **rt_overrides):
    if rules is not None:
        rules_path = tmp_path / "rt_rules.json"
        rules_path.write_text(json.dumps(rules))
        app_config.stream.rules_file = str(rules_path)
    for key, value in rt_overrides.items():
        setattr(app_config.rtmonitor, key, value)
    app = create_app(app_config)
    with TestClient(app) as client:
        yield app.state.service, client


def subscribe(ws, request_id: str, filters: list[dict] | None = None) -> dict:
    ws.send_json({"msg_type": "rt_subscribe", "request_id": request_id,
                  "filters": filters or []})
    return ws.receive_json()


class TestHandshake:
    def test_connect_ok(self, test_service):
        _, client = test_service
        with client.websocket_connect(WS) as ws:
            hello = ws.receive_json()
            assert hello["msg_type"] == "rt_connect_ok"
            Timestamp.parse(hello["ts"])

    def test_two_clients_get_independent_sessions(self, test_service):
        svc, client = test_service
        with client.websocket_connect(WS) as a, client.websocket_connect(WS) as b:
            a.receive_json()
            b.receive_json()
            assert subscribe(a, "tok")["msg_type"] == "rt_subscribe_ok"
            assert subscribe(b, "tok")["msg_type"] == "rt_subscribe_ok"
            sessions = svc.registry.introspect()["sessions"]
            assert len(sessions) == 2

    def test_binary_frame_closes_connection(self, test_service):
        _, client = test_service
        with pytest.raises(WebSocketDisconnect):
            with client.websocket_connect(WS) as ws:
                ws.receive_json()
                ws.send_bytes(b"\x00\x01")
                ws.receive_json()

    def test_malformed_json_closes_connection(self, test_service):
        _, client = test_service
        with pytest.raises(WebSocketDisconnect):
            with client.websocket_connect(WS) as ws:
                ws.receive_json()
                ws.send_text("{not json")
                ws.receive_json()


class TestSubscription:
    def test_filtered_delivery(self, test_service):
        svc, client = test_service
        seed_store(svc.metadata)
        with client.websocket_connect(WS) as ws:
            ws.receive_json()
            assert subscribe(ws, "demo", [{"field": "acp_id", "op": "==",
                                           "value": "elsys-co2-041ba9"}])["msg_type"] == "rt_subscribe_ok"
            send_tcp_lines(tcp_port_of(svc), [fleetgen.demo_reading_payload(),
                                              {"acp_id": "other", "acp_ts": "5.000000",
                                               "features": {"co2": 1}}])
            frame = ws.receive_json()
            assert frame["msg_type"] == "rt_data"
            assert frame["request_id"] == "demo"
            item = frame["request_data"][0]
            assert item["acp_id"] == "elsys-co2-041ba9"
            assert item["features"]["co2"] == 415
            wait_until(lambda: svc.processor.counters.processed >= 2)
            assert svc.registry.sessions and svc.registry.pushed_total == 1

    def test_match_all_receives_everything(self, test_service):
        svc, client = test_service
        with client.websocket_connect(WS) as ws:
            ws.receive_json()
            subscribe(ws, "all")
            payloads = [{"acp_id": f"s{i}", "acp_ts": f"{i}.000000", "features": {"n": i}}
                        for i in range(5)]
            send_tcp_lines(tcp_port_of(svc), payloads)
            got = [ws.receive_json()["request_data"][0]["acp_id"] for _ in range(5)]
            assert got == [f"s{i}" for i in range(5)]

    def test_feature_filter_pushed_exactly_once(self, test_service):
        svc, client = test_service
        with client.websocket_connect(WS) as ws:
            ws.receive_json()
            subscribe(ws, "hi", [{"field": "feature.co2", "op": ">", "value": 400}])
            subscribe(ws, "marker")
            send_tcp_lines(tcp_port_of(svc), [
                {"acp_id": "a", "acp_ts": "1.000000", "features": {"co2": 415}},
                {"acp_id": "a", "acp_ts": "2.000000", "features": {"co2": 390}},
            ])
            frames = [ws.receive_json() for _ in range(3)]
            hi_frames = [f for f in frames if f["request_id"] == "hi"]
            assert len(hi_frames) == 1
            assert hi_frames[0]["request_data"][0]["features"]["co2"] == 415

    def test_duplicate_request_id_rejected(self, test_service):
        _, client = test_service
        with client.websocket_connect(WS) as ws:
            ws.receive_json()
            subscribe(ws, "tok")
            err = subscribe(ws, "tok")
            assert err == {"msg_type": "rt_error", "request_id": "tok", "reason": "duplicate"}

    def test_unknown_filter_field_rejected(self, test_service):
        _, client = test_service
        with client.websocket_connect(WS) as ws:
            ws.receive_json()
            err = subscribe(ws, "bad", [{"field": "bogus", "op": "==", "value": 1}])
            assert err["msg_type"] == "rt_error"
            assert err["reason"] == "bad_filter"

    def test_ordering_100_frames(self, test_service):
        svc, client = test_service
        with client.websocket_connect(WS) as ws:
            ws.receive_json()
            subscribe(ws, "ord", [{"field": "acp_id", "op": "==", "value": "seq"}])
            payloads = [{"acp_id": "seq", "acp_ts": f"{i}.000000", "features": {"i": i}}
                        for i in range(100)]
            send_tcp_lines(tcp_port_of(svc), payloads)
            seen = [ws.receive_json()["request_data"][0]["features"]["i"] for _ in range(100)]
            assert seen == list(range(100))


class TestUnsubscribe:
    def test_lifecycle(self, test_service):
        svc, client = test_service
        with client.websocket_connect(WS) as ws:
            ws.receive_json()
            subscribe(ws, "once", [{"field": "acp_id", "op": "==", "value": "u1"}])
            send_tcp_lines(tcp_port_of(svc), [{"acp_id": "u1", "acp_ts": "1.000000",
                                               "features": {"x": 1}}])
            assert ws.receive_json()["msg_type"] == "rt_data"
            ws.send_json({"msg_type": "rt_unsubscribe", "request_id": "once"})
            assert ws.receive_json()["msg_type"] == "rt_unsubscribe_ok"
            send_tcp_lines(tcp_port_of(svc), [{"acp_id": "u1", "acp_ts": "2.000000",
                                               "features": {"x": 2}}])
            wait_until(lambda: svc.processor.counters.processed >= 2)
            ws.send_json({"msg_type": "rt_unsubscribe", "request_id": "once"})
            # no rt_data arrived in between; next frame is the second unsubscribe's error
            err = ws.receive_json()
            assert err == {"msg_type": "rt_error", "request_id": "once",
                           "reason": "unknown_request_id"}

    def test_disconnect_drops_all_tokens(self, test_service):
        svc, client = test_service
        with client.websocket_connect(WS) as ws:
            ws.receive_json()
            subscribe(ws, "a")
            subscribe(ws, "b")
            assert svc.registry.introspect()["sessions"][0]["tokens"] == ["a", "b"]
        wait_until(lambda: not svc.registry.sessions, message="session cleanup")


class TestEvents:
    def test_derived_event_matches_event_filter(self, app_config, tmp_path):
        rules = {
            "rules": [{"rule_id": "dd", "derived_type": "co2_high_twice", "steps": [
                {"match": {"field": "acp_event", "op": "==", "value": "co2_high"}, "ttl_s": 60},
                {"match": {"field": "acp_event", "op": "==", "value": "co2_high"}, "ttl_s": 60},
            ]}],
            "thresholds": [{"feature": "co2", "op": ">", "value": 400,
                            "event_name": "co2_high", "ttl_s": 60, "confidence": 0.9}],
        }
        with service_client(app_config, rules=rules, tmp_path=tmp_path) as (svc, client):
            with client.websocket_connect(WS) as ws:
                ws.receive_json()
                subscribe(ws, "ev", [{"field": "acp_event", "op": "==",
                                      "value": "co2_high"}])
                subscribe(ws, "dv", [{"field": "acp_event", "op": "==",
                                      "value": "co2_high_twice"}])
                send_tcp_lines(tcp_port_of(svc), [
                    {"acp_id": "a", "acp_ts": "10.000000", "features": {"co2": 500}},
                    {"acp_id": "a", "acp_ts": "20.000000", "features": {"co2": 510}},
                ])
                frames = [ws.receive_json() for _ in range(3)]
                by_token = {}
                for frame in frames:
                    by_token.setdefault(frame["request_id"], []).append(
                        frame["request_data"][0])
                assert len(by_token["ev"]) == 2
                derived = by_token["dv"][0]
                assert derived["rule_id"] == "dd"
                assert derived["acp_confidence"] == pytest.approx(0.81)
                assert len(derived["constituents"]) == 2


class TestOverflow:
    def test_registry_policy(self):
        async def scenario():
            registry = SubscriptionRegistry(buffer_size=3)
            session = registry.connect()
            registry.subscribe(session, {"msg_type": "rt_subscribe",
                                         "request_id": "all", "filters": []})
            reading = SensorReading(acp_id="x", acp_ts=Timestamp(0), features={"a": 1})
            for _ in range(5):
                registry.match_and_push(reading, reading.wire_doc())
            assert session.overflowed
            assert registry.overflows == 1
            frames = []
            while not session.queue.empty():
                frames.append(session.queue.get_nowait())
            return frames

        frames = asyncio.run(scenario())
        assert len(frames) == 1
        assert frames[0]["msg_type"] == "rt_error"
        assert frames[0]["reason"] == "overflow"

    def test_slow_client_disconnected_with_error(self, app_config, tmp_path):
        # Two thresholds firing on one reading produce three frames in a
        # single synchronous batch; a buffer of two must overflow.
        rules = {"rules": [], "thresholds": [
            {"feature": "co2", "op": ">", "value": 1, "event_name": "e1", "ttl_s": 5},
            {"feature": "co2", "op": ">", "value": 2, "event_name": "e2", "ttl_s": 5},
        ]}
        with service_client(app_config, rules=rules, tmp_path=tmp_path,
                            buffer_size=2) as (svc, client):
            frames = []
            with pytest.raises(WebSocketDisconnect):
                with client.websocket_connect(WS) as ws:
                    ws.receive_json()
                    subscribe(ws, "all")
                    send_tcp_lines(tcp_port_of(svc), [{"acp_id": "x", "acp_ts": "1.000000",
                                                       "features": {"co2": 10}}])
                    for _ in range(5):
                        frames.append(ws.receive_json())
            assert any(f.get("reason") == "overflow" for f in frames)
            assert svc.registry.overflows == 1

    def test_other_clients_unaffected_by_overflow(self, app_config, tmp_path):
        rules = {"rules": [], "thresholds": [
            {"feature": "co2", "op": ">", "value": 1, "event_name": "e1", "ttl_s": 5},
            {"feature": "co2", "op": ">", "value": 2, "event_name": "e2", "ttl_s": 5},
        ]}
        with service_client(app_config, rules=rules, tmp_path=tmp_path,
                            buffer_size=2) as (svc, client):
            with client.websocket_connect(WS) as healthy:
                healthy.receive_json()
                # Matches exactly one of the three routed items, so the
                # healthy session stays under its own buffer.
                subscribe(healthy, "one", [{"field": "acp_event", "op": "==", "value": "e1"}])
                try:
                    with client.websocket_connect(WS) as doomed:
                        doomed.receive_json()
                        subscribe(doomed, "all")
                        send_tcp_lines(tcp_port_of(svc), [
                            {"acp_id": "x", "acp_ts": "1.000000", "features": {"co2": 9}}])
                        for _ in range(5):
                            doomed.receive_json()
                except WebSocketDisconnect:
                    pass
                frame = healthy.receive_json()
                assert frame["request_id"] == "one"
                assert frame["request_data"][0]["acp_event"] == "e1"
                assert frame["request_data"][0]["acp_id"] == "x"


class TestPingPong:
    def test_missed_pongs_close_session(self, app_config):
        with service_client(app_config, ping_interval_s=0.05,
                            max_missed_pongs=2) as (_, client):
            with pytest.raises(WebSocketDisconnect):
                with client.websocket_connect(WS) as ws:
                    ws.receive_json()
                    for _ in range(10):
                        ws.receive_json()

    def test_pong_keeps_session_alive(self, app_config):
        with service_client(app_config, ping_interval_s=0.05,
                            max_missed_pongs=2) as (_, client):
            with client.websocket_connect(WS) as ws:
                ws.receive_json()
                for _ in range(6):
                    frame = ws.receive_json()
                    assert frame["msg_type"] == "rt_ping"
                    ws.send_json({"msg_type": "rt_pong"})

    def test_unknown_message_type_reports_error(self, test_service):
        _, client = test_service
        with client.websocket_connect(WS) as ws:
            ws.receive_json()
            ws.send_json({"msg_type": "rt_nonsense"})
            err = ws.receive_json()
            assert err["msg_type"] == "rt_error"
            assert err["reason"] == "bad_message"


class TestDeliverySoundness:
    def test_received_multiset_equals_brute_force_filter(self, test_service):
        """Random filters over a random replay: delivery == brute-force evaluation."""
        import random

        svc, client = test_service
        rng = random.Random(55)
        filter_sets = {
            "f-id": [{"field": "acp_id", "op": "==", "value": "m3"}],
            "f-co2": [{"field": "feature.co2", "op": ">=", "value": 600}],
            "f-both": [{"field": "acp_id", "op": "!=", "value": "m1"},
                       {"field": "feature.motion", "op": ">", "value": 1}],
            "f-all": [],
        }
        payloads = []
        for i in range(120):
            payloads.append({
                "acp_id": f"m{rng.randint(0, 4)}",
                "acp_ts": f"{i}.000000",
                "features": {"co2": rng.choice([400, 600, 800]),
                             "motion": rng.randint(0, 3), "seq": i},
            })

        def brute_force(token: str) -> list[int]:
            conds = filter_sets[token]
            out = []
            for p in payloads:
                hit = True
                for cond in conds:
                    field = cond["field"]
                    actual = (p["features"].get(field[8:]) if field.startswith("feature.")
                              else p.get(field))
                    op, want = cond["op"], cond["value"]
                    hit = hit and actual is not None and {
                        "==": actual == want, "!=": actual != want,
                        ">": actual > want, ">=": actual >= want,
                        "<": actual < want, "<=": actual <= want,
                    }[op]
                if hit:
                    out.append(p["features"]["seq"])
            return out

        with client.websocket_connect(WS) as ws:
            ws.receive_json()
            for token, conds in filter_sets.items():
                assert subscribe(ws, token, conds)["msg_type"] == "rt_subscribe_ok"
            send_tcp_lines(tcp_port_of(svc), payloads)
            expected_total = sum(len(brute_force(t)) for t in filter_sets)
            received: dict[str, list[int]] = {t: [] for t in filter_sets}
            for _ in range(expected_total):
                frame = ws.receive_json()
                received[frame["request_id"]].append(
                    frame["request_data"][0]["features"]["seq"])
        for token in filter_sets:
            assert received[token] == brute_force(token), token


class TestSubscriptionModel:
    def test_empty_filter_list_matches_all(self):
        from buildsense.rtmonitor import Subscription

        sub = Subscription("r", [])
        assert sub.matches(SensorReading(acp_id="x", acp_ts=Timestamp(0), features={"a": 1}))

    def test_parent_crate_filter(self):
        from buildsense.rtmonitor import Subscription

        sub = Subscription("r", [FieldCondition(field="parent_crate_id", op="==",
                                                value="FE11")])
        reading = SensorReading(acp_id="x", acp_ts=Timestamp(0), features={"a": 1},
                                parent_crate_id="FE11")
        assert sub.matches(reading)
        assert not sub.matches(SensorReading(acp_id="x", acp_ts=Timestamp(0),
                                             features={"a": 1}))
