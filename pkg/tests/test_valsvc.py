import json
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from schoolsweep.geo import GeoPoint, haversine_distance
from schoolsweep.nationwide import PredictionPoint
from schoolsweep.valsvc.matching import MatchConfig, match, venn_stats
from schoolsweep.valsvc.service import ServiceState, create_app
from schoolsweep.valsvc.verdicts import (
    StaleRevisionError,
    Verdict,
    VerdictError,
    VerdictLog,
    now_utc,
)


def east(meters, lat=0.0):
    return GeoPoint(lat, math.degrees(meters / 6_371_000.0))


class TestMatch:
    def test_single_pair_within_range(self):
        result = match([("p1", east(0.0), 0.9)], [("g1", east(100.0))], MatchConfig(d=250))
        assert len(result.pairs) == 1
        assert result.pairs[0].prediction_id == "p1"
        assert result.pairs[0].distance_m == pytest.approx(100.0, abs=0.1)

    def test_out_of_range_unmatched(self):
        result = match([("p1", east(0.0), 0.9)], [("g1", east(300.0))], MatchConfig(d=250))
        assert result.pairs == []
        assert result.unmatched_predictions == ["p1"]
        assert result.unmatched_government == ["g1"]

    def test_one_to_one_greedy_prefers_closest(self):
        result = match(
            [("near", east(50.0), 0.9), ("far", east(120.0), 0.9)],
            [("g1", east(0.0))],
            MatchConfig(d=250),
        )
        assert [p.prediction_id for p in result.pairs] == ["near"]
        assert result.unmatched_predictions == ["far"]

    def test_tau_filter_strict(self):
        result = match([("p1", east(0.0), 0.5)], [("g1", east(10.0))], MatchConfig(tau=0.5))
        assert result.pairs == [] and result.unmatched_predictions == []
        result = match([("p1", east(0.0), 0.51)], [("g1", east(10.0))], MatchConfig(tau=0.5))
        assert len(result.pairs) == 1

    def test_venn_identities(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            preds = [(f"p{i}", east(rng.uniform(0, 3000), lat=0.0), rng.random()) for i in range(30)]
            gov = [(f"g{i}", east(rng.uniform(0, 3000), lat=0.001)) for i in range(20)]
            config = MatchConfig(tau=0.3, d=200.0)
            result = match(preds, gov, config)
            venn = result.venn()
            n_filtered = sum(1 for _, _, pr in preds if pr > config.tau)
            assert venn["predictions_total"] == n_filtered
            assert venn["government_total"] == len(gov)
            ids = [p.prediction_id for p in result.pairs]
            gids = [p.government_id for p in result.pairs]
            assert len(set(ids)) == len(ids) and len(set(gids)) == len(gids)
            assert all(p.distance_m <= config.d for p in result.pairs)

    def test_matches_brute_force_greedy_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            preds = [(f"p{i:02d}", east(rng.uniform(0, 1500), lat=rng.uniform(0, 0.01)), 1.0) for i in range(25)]
            gov = [(f"g{i:02d}", east(rng.uniform(0, 1500), lat=rng.uniform(0, 0.01))) for i in range(25)]
            config = MatchConfig(d=300.0)
            result = match(preds, gov, config)
            # oracle: full enumeration with the same ordering rule
            candidates = []
            for pid, ploc, _ in preds:
                for gid, gloc in gov:
                    dist = haversine_distance(ploc, gloc)
                    if dist <= config.d:
                        candidates.append((dist, pid, gid))
            candidates.sort()
            taken_p, taken_g, pairs = set(), set(), []
            for dist, pid, gid in candidates:
                if pid in taken_p or gid in taken_g:
                    continue
                taken_p.add(pid)
                taken_g.add(gid)
                pairs.append((pid, gid))
            assert [(p.prediction_id, p.government_id) for p in result.pairs] == pairs

    def test_deterministic(self):
        preds = [("p1", east(0.0), 0.9), ("p2", east(40.0), 0.8)]
        gov = [("g1", east(20.0))]
        a = match(preds, gov)
        b = match(preds, gov)
        assert a == b

    def test_monotonicity_in_d_and_tau(self):
        rng = np.random.default_rng(2)
        preds = [(f"p{i}", east(rng.uniform(0, 2000)), rng.random()) for i in range(40)]
        gov = [(f"g{i}", east(rng.uniform(0, 2000), lat=0.0005)) for i in range(25)]
        last = -1
        for d in (50, 100, 200, 400, 800):
            n = len(match(preds, gov, MatchConfig(d=d)).pairs)
            assert n >= last
            last = n
        last = 10**9
        for tau in (0.0, 0.25, 0.5, 0.75, 0.95):
            n = sum(1 for _, _, p in preds if p > tau)
            assert n <= last
            last = n


class TestVennStats:
    def test_reported_country_totals(self):
        venn = venn_stats(6_983, 2_050, 5_369)
        assert venn["government_total"] == 9_033
        assert venn["predictions_total"] == 12_352

    def test_zeros(self):
        venn = venn_stats(0, 0, 0)
        assert venn["government_total"] == 0 and venn["predictions_total"] == 0


def synthetic_fixture():
    """12 predictions and 9 government points built to yield exactly 7 pairs."""
    preds, gov = [], []
    for i in range(7):
        base = 2000.0 * i
        preds.append((f"p{i}", east(base), 0.9))
        gov.append((f"g{i}", east(base + 50.0)))
    gov.append(("g7", east(50_000.0)))
    gov.append(("g8", east(60_000.0)))
    for i in range(5):
        preds.append((f"q{i}", east(100_000.0 + 2000.0 * i), 0.8))
    return preds, gov


class TestSyntheticVennFixture:
    def test_seven_two_five(self):
        preds, gov = synthetic_fixture()
        result = match(preds, gov, MatchConfig(d=250.0))
        venn = result.venn()
        assert (venn["matched"], venn["unmatched_government"], venn["unmatched_predictions"]) == (7, 2, 5)
        assert venn["government_total"] == 9
        assert venn["predictions_total"] == 12


class TestVerdictLog:
    def test_append_and_readback(self, tmp_path):
        log = VerdictLog(tmp_path / "verdicts.jsonl")
        v = Verdict("p1", "approved", "val1", 1, now_utc())
        stored, appended = log.record(v)
        assert appended and stored == v
        reloaded = VerdictLog(tmp_path / "verdicts.jsonl")
        assert reloaded.latest_for("p1") == v

    def test_idempotent_same_revision(self, tmp_path):
        log = VerdictLog(tmp_path / "v.jsonl")
        v = Verdict("p1", "approved", "val1", 1, now_utc())
        log.record(v)
        again = Verdict("p1", "approved", "val1", 1, now_utc())
        stored, appended = log.record(again)
        assert not appended
        assert (tmp_path / "v.jsonl").read_text().count("\n") == 1

    def test_stale_revision_rejected(self, tmp_path):
        log = VerdictLog(tmp_path / "v.jsonl")
        log.record(Verdict("p1", "approved", "val1", 2, now_utc()))
        with pytest.raises(StaleRevisionError):
            log.record(Verdict("p1", "rejected", "val1", 1, now_utc()))
        with pytest.raises(StaleRevisionError):
            log.record(Verdict("p1", "rejected", "val1", 2, now_utc()))

    def test_later_revision_supersedes(self, tmp_path):
        log = VerdictLog(tmp_path / "v.jsonl")
        log.record(Verdict("p1", "approved", "val1", 1, now_utc()))
        log.record(Verdict("p1", "rejected", "val1", 2, now_utc()))
        assert log.latest_for("p1").decision == "rejected"

    def test_relocated_requires_coordinates(self):
        with pytest.raises(VerdictError):
            Verdict("p1", "relocated", "val1", 1, now_utc())
        v = Verdict("p1", "relocated", "val1", 1, now_utc(), 14.0, -17.0)
        assert v.corrected_lat == 14.0


@pytest.fixture()
def service(tmp_path):
    preds, gov = synthetic_fixture()
    prediction_points = [
        PredictionPoint(loc, prob, pid, 1.0) for pid, loc, prob in preds
    ]
    gov_clean = [(gid, loc) for gid, loc in gov]
    gov_raw = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [loc.lon, loc.lat]},
                "properties": {"id": gid, "name": f"School {gid}"},
            }
            for gid, loc in gov
        ],
    }
    state = ServiceState(prediction_points, gov_clean, gov_raw, VerdictLog(tmp_path / "v.jsonl"))
    return TestClient(create_app(state))


class TestService:
    def test_stats_fixture(self, service):
        payload = service.get("/stats", params={"tau": 0.0, "d": 250}).json()
        assert payload["matched"] == 7
        assert payload["unmatched_government"] == 2
        assert payload["unmatched_predictions"] == 5

    def test_predictions_filter_consistency(self, service):
        stats = service.get("/stats", params={"tau": 0.0, "d": 250}).json()
        unmatched = service.get(
            "/predictions", params={"tau": 0.0, "d": 250, "matched": "unmatched"}
        ).json()
        assert len(unmatched["features"]) == stats["unmatched_predictions"]
        matched = service.get(
            "/predictions", params={"tau": 0.0, "d": 250, "matched": "matched"}
        ).json()
        assert len(matched["features"]) == stats["matched"]

    def test_predictions_sorted_by_probability(self, service):
        doc = service.get("/predictions").json()
        probs = [f["properties"]["probability"] for f in doc["features"]]
        assert probs == sorted(probs, reverse=True)

    def test_raising_tau_never_increases_count(self, service):
        counts = [
            len(service.get("/predictions", params={"tau": tau}).json()["features"])
            for tau in (0.0, 0.5, 0.85, 0.95)
        ]
        assert counts == sorted(counts, reverse=True)

    def test_government_served_raw(self, service):
        doc = service.get("/government").json()
        assert doc["type"] == "FeatureCollection"
        assert len(doc["features"]) == 9

    def test_verdict_roundtrip(self, service):
        body = {
            "prediction_id": "q0",
            "decision": "approved",
            "validator_id": "tester",
            "revision": 1,
        }
        response = service.post("/verdicts", json=body)
        assert response.status_code == 200
        assert response.json()["status"] == "recorded"
        again = service.post("/verdicts", json=body)
        assert again.json()["status"] == "duplicate"
        doc = service.get("/predictions").json()
        verdicts = {f["properties"]["id"]: f["properties"]["verdict"] for f in doc["features"]}
        assert verdicts["q0"]["decision"] == "approved"

    def test_relocate_flow_and_export(self, service):
        body = {
            "prediction_id": "q1",
            "decision": "relocated",
            "validator_id": "tester",
            "revision": 1,
            "corrected_location": {"lat": 0.001, "lon": 0.9},
        }
        assert service.post("/verdicts", json=body).status_code == 200
        service.post("/verdicts", json={
            "prediction_id": "q2", "decision": "rejected", "validator_id": "tester", "revision": 1,
        })
        service.post("/verdicts", json={
            "prediction_id": "p0", "decision": "approved", "validator_id": "tester", "revision": 1,
        })
        export = service.get("/export", params={"format": "geojson"}).json()
        by_id = {f["properties"]["id"]: f for f in export["features"]}
        assert set(by_id) == {"q1", "p0"}
        assert by_id["q1"]["geometry"]["coordinates"] == [0.9, 0.001]

    def test_error_codes(self, service):
        assert service.post("/verdicts", json={
            "prediction_id": "nope", "decision": "approved", "validator_id": "v", "revision": 1,
        }).status_code == 404
        assert service.post("/verdicts", json={
            "prediction_id": "q0", "decision": "relocated", "validator_id": "v", "revision": 1,
        }).status_code == 400
        service.post("/verdicts", json={
            "prediction_id": "q3", "decision": "approved", "validator_id": "v", "revision": 5,
        })
        assert service.post("/verdicts", json={
            "prediction_id": "q3", "decision": "rejected", "validator_id": "v", "revision": 4,
        }).status_code == 409
        assert service.get("/stats", params={"tau": "bogus"}).status_code == 400
        assert service.get("/predictions", params={"matched": "sideways"}).status_code == 400

    def test_stale_verdict_after_reload(self, service):
        # revision conflicts survive the in-memory index
        service.post("/verdicts", json={
            "prediction_id": "q4", "decision": "approved", "validator_id": "v", "revision": 2,
        })
        conflict = service.post("/verdicts", json={
            "prediction_id": "q4", "decision": "rejected", "validator_id": "v", "revision": 2,
        })
        assert conflict.status_code == 409
