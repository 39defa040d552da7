import json
import xml.etree.ElementTree as ET

import pytest
from pydantic import ConfigDict

from buildsense import fleetgen
from buildsense.model import CrateRecord, SensorMetadataRecord, SensorReading

from conftest import seed_store, send_tcp_lines, tcp_port_of, wait_until


@pytest.fixture
def seeded_service(test_service):
    svc, client = test_service
    seed_store(svc.metadata)
    return svc, client


def push_demo_reading(svc):
    send_tcp_lines(tcp_port_of(svc), [fleetgen.demo_reading_payload()])
    wait_until(lambda: svc.processor.counters.processed >= 1, message="reading processed")


class TestBimEndpoints:
    def test_fe11_document(self, seeded_service):
        _, client = seeded_service
        body = client.get("/api/bim/get/FE11").json()
        assert body["crate_id"] == "FE11"
        assert body["crate_type"] == "room"
        assert body["parent_crate_id"] == "FF"
        assert body["long-name"] == "Computer Science Department"
        assert body["acp_location"] == {"system": "WGB", "x": 22.06, "y": 34.67, "f": 1, "zf": 0}
        assert body["acp_boundary"]["boundary"] == [[0, 0], [0, 78], [73, 78], [73, 0]]
        assert body["acp_ts"] == "1589469825.165538"
        assert "children" not in body

    def test_children_depth_one(self, seeded_service):
        _, client = seeded_service
        body = client.get("/api/bim/get/WGB/1").json()
        assert [c["crate_id"] for c in body["children"]] == ["FF", "GF"]
        assert all("children" not in c for c in body["children"])

    def test_leaf_with_depth_has_empty_children(self, seeded_service):
        _, client = seeded_service
        assert client.get("/api/bim/get/FE11/5").json()["children"] == []

    def test_unknown_crate_404(self, seeded_service):
        _, client = seeded_service
        resp = client.get("/api/bim/get/NOPE")
        assert resp.status_code == 404
        assert resp.json() == {"error": "not found", "crate_id": "NOPE"}

    def test_malformed_depth_400(self, seeded_service):
        _, client = seeded_service
        assert client.get("/api/bim/get/WGB/bananas").status_code == 400
        assert client.get("/api/bim/get/WGB/-1").status_code == 400


class TestSpaceEndpoint:
    def test_floor_svg_structure(self, seeded_service):
        _, client = seeded_service
        resp = client.get("/api/space/get_bim_floor_number/1")
        assert resp.status_code == 200
        assert resp.headers["content-type"].startswith("image/svg+xml")
        root = ET.fromstring(resp.text)
        polygons = {p.get("id"): p for p in root.iter("{http://www.w3.org/2000/svg}polygon")}
        assert set(polygons) == {"FE11", "FF"}
        fe11 = polygons["FE11"]
        assert fe11.get("data-crate_type") == "room"
        assert fe11.get("data-parent_crate") == "FF"
        assert fe11.get("data-floor_number") == "1"
        titles = fe11.findall("{http://www.w3.org/2000/svg}title")
        assert len(titles) == 1 and titles[0].text.strip() == "FE11"

    def test_polygon_vertex_counts_match_boundaries(self, seeded_service):
        svc, client = seeded_service
        root = ET.fromstring(client.get("/api/space/get_bim_floor_number/1").text)
        for polygon in root.iter("{http://www.w3.org/2000/svg}polygon"):
            crate = svc.metadata.get_crate_record(polygon.get("id"))
            assert len(polygon.get("points").split()) == len(crate.acp_boundary.boundary)

    def test_scaling_applied(self, seeded_service):
        svc, client = seeded_service
        root = ET.fromstring(client.get("/api/space/get_bim_floor_number/1").text)
        fe11 = next(p for p in root.iter("{http://www.w3.org/2000/svg}polygon")
                    if p.get("id") == "FE11")
        first_x, first_y = fe11.get("points").split()[0].split(",")
        scale = svc.cfg.svg.scale
        assert float(first_x) == pytest.approx(scale * 22.06, rel=1e-6)
        assert float(first_y) == pytest.approx(scale * 34.67, rel=1e-6)

    def test_regeneration_reflects_updates(self, seeded_service):
        svc, client = seeded_service
        before = client.get("/api/space/get_bim_floor_number/1").text
        record = svc.metadata.get_crate_record("FE11")
        moved = record.model_copy(update={
            "acp_location": record.acp_location.model_copy(update={"x": 50.0})})
        svc.metadata.put_crate(moved)
        after = client.get("/api/space/get_bim_floor_number/1").text
        assert before != after
        fe11 = next(p for p in ET.fromstring(after).iter(
            "{http://www.w3.org/2000/svg}polygon") if p.get("id") == "FE11")
        assert float(fe11.get("points").split()[0].split(",")[0]) == pytest.approx(
            svc.cfg.svg.scale * 50.0, rel=1e-6)

    def test_empty_floor_returns_empty_group(self, seeded_service):
        _, client = seeded_service
        resp = client.get("/api/space/get_bim_floor_number/99")
        assert resp.status_code == 200
        root = ET.fromstring(resp.text)
        assert len(root.findall("{http://www.w3.org/2000/svg}g")) == 1
        assert list(root.iter("{http://www.w3.org/2000/svg}polygon")) == []

    def test_non_integer_floor_400(self, seeded_service):
        _, client = seeded_service
        assert client.get("/api/space/get_bim_floor_number/attic").status_code == 400


class TestSensorsEndpoints:
    def test_demo_sensor_document(self, seeded_service):
        _, client = seeded_service
        body = client.get("/api/sensors/get/elsys-co2-041ba9").json()
        assert body["acp_id"] == "elsys-co2-041ba9"
        assert body["acp_type"] == "elsys-co2"
        assert body["features"] == ["co2", "humidity", "light", "motion", "temperature", "vdd"]
        assert body["acp_location"]["parent_crate_id"] == "FE11"

    def test_unknown_sensor_404(self, seeded_service):
        _, client = seeded_service
        assert client.get("/api/sensors/get/ghost").status_code == 404

    def test_response_round_trips_through_store(self, seeded_service):
        svc, client = seeded_service
        body = client.get("/api/sensors/get/elsys-co2-041ba9").json()
        record = SensorMetadataRecord.model_validate(body)
        svc.metadata.put_sensor(record)
        again = client.get("/api/sensors/get/elsys-co2-041ba9").json()
        assert again == body

    def test_sensors_by_crate_containment(self, seeded_service):
        _, client = seeded_service
        fe11 = client.get("/api/sensors/bim/get/FE11").json()
        assert [s["acp_id"] for s in fe11] == ["elsys-co2-041ba9"]
        wgb = client.get("/api/sensors/bim/get/WGB").json()
        assert {s["acp_id"] for s in wgb} >= {s["acp_id"] for s in fe11}
        assert client.get("/api/sensors/bim/get/NOPE").status_code == 404


class TestReadingsEndpoint:
    def test_latest_matches_documented_reading(self, seeded_service):
        svc, client = seeded_service
        push_demo_reading(svc)
        body = client.get("/api/readings/get/elsys-co2-041ba9").json()
        assert body["acp_id"] == "elsys-co2-041ba9"
        assert body["acp_ts"] == "1589469979.861816"
        assert body["features"] == {"co2": 415, "humidity": 36, "light": 0,
                                    "motion": 2, "temperature": 15.3, "vdd": 3659}
        # enrichment makes the document self-contained
        assert body["acp_type"] == "elsys-co2"
        assert body["parent_crate_id"] == "FE11"

    def test_range_query(self, seeded_service):
        svc, client = seeded_service
        port = tcp_port_of(svc)
        payloads = [{"acp_id": "r1", "acp_ts": f"{100 + i}.000000", "features": {"co2": i}}
                    for i in range(5)]
        send_tcp_lines(port, payloads)
        wait_until(lambda: svc.processor.counters.processed >= 5, message="5 readings")
        body = client.get("/api/readings/get/r1", params={"from": "101.000000",
                                                          "to": "103.000000"}).json()
        assert [r["acp_ts"] for r in body] == ["101.000000", "102.000000", "103.000000"]
        exact = client.get("/api/readings/get/r1", params={"from": "102.000000",
                                                           "to": "102.000000"}).json()
        assert len(exact) == 1

    def test_errors(self, seeded_service):
        svc, client = seeded_service
        push_demo_reading(svc)
        assert client.get("/api/readings/get/ghost").status_code == 404
        bad = client.get("/api/readings/get/elsys-co2-041ba9",
                         params={"from": "2.000000", "to": "1.000000"})
        assert bad.status_code == 400
        half = client.get("/api/readings/get/elsys-co2-041ba9", params={"from": "1.000000"})
        assert half.status_code == 400
        garbage = client.get("/api/readings/get/elsys-co2-041ba9",
                             params={"from": "x", "to": "y"})
        assert garbage.status_code == 400


class StrictCrate(CrateRecord):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")


class StrictSensor(SensorMetadataRecord):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")


class StrictReading(SensorReading):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")


class TestSchemaClosure:
    def test_responses_parse_with_no_unknown_fields(self, seeded_service):
        svc, client = seeded_service
        push_demo_reading(svc)
        crate = client.get("/api/bim/get/FE11").json()
        StrictCrate.model_validate(crate)
        tree = client.get("/api/bim/get/WGB/2").json()

        def check_tree(doc):
            children = doc.pop("children", None)
            StrictCrate.model_validate(doc)
            for child in children or []:
                check_tree(child)

        check_tree(tree)
        StrictSensor.model_validate(client.get("/api/sensors/get/elsys-co2-041ba9").json())
        StrictReading.model_validate(client.get("/api/readings/get/elsys-co2-041ba9").json())

    def test_api_results_equal_store_results(self, seeded_service):
        svc, client = seeded_service
        assert client.get("/api/bim/get/WGB/3").json() == json.loads(
            json.dumps(svc.metadata.get_crate("WGB", 3)))
        api_sensors = client.get("/api/sensors/bim/get/WGB").json()
        store_sensors = [s.wire_doc() for s in svc.metadata.sensors_in_crate("WGB", True)]
        assert api_sensors == store_sensors

    def test_agreement_on_randomized_store(self, test_service):
        import random

        from conftest import random_hierarchy

        svc, client = test_service
        rng = random.Random(31)
        records = random_hierarchy(rng, 60)
        for record in records:
            svc.metadata.put_crate(record)
        for probe in rng.sample([r.crate_id for r in records], 8):
            depth = rng.choice([0, 1, 2, 7])
            url = f"/api/bim/get/{probe}" if depth == 0 else f"/api/bim/get/{probe}/{depth}"
            assert client.get(url).json() == json.loads(
                json.dumps(svc.metadata.get_crate(probe, depth)))
        for floor in (0, 1, 2, 3):
            resp = client.get(f"/api/space/get_bim_floor_number/{floor}")
            root = ET.fromstring(resp.text)
            ids = [p.get("id") for p in root.iter("{http://www.w3.org/2000/svg}polygon")]
            assert len(ids) == len(set(ids)), "polygon ids must be unique"
            expected = [c.crate_id for c in svc.metadata.crates_on_floor(floor)
                        if not c.acp_location.is_gps]
            assert ids == expected


class TestHealth:
    def test_healthz_shape(self, test_service):
        _, client = test_service
        body = client.get("/healthz").json()
        assert body["status"] == "ok"
        assert "tcp_test" in body["intake"]["channels"]
        assert body["pipeline"]["processed"] == 0
