"""HTTP API backing the validation UI.

Endpoints (JSON):
  GET  /predictions?tau=&d=&matched={all|matched|unmatched}
  GET  /government
  GET  /stats?tau=&d=
  POST /verdicts
  GET  /export?format=geojson

Matching is computed per (tau, d) from immutable snapshots and cached;
verdict writes are serialized by the log.  Government points are matched
against the cleaned set but displayed from the raw file.
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, HTTPException, Query
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from ..geo import GeoPoint
from ..nationwide import PredictionPoint, predictions_from_geojson
from .matching import MatchConfig, MatchResult, match
from .verdicts import StaleRevisionError, Verdict, VerdictError, VerdictLog, now_utc


class ServiceState:
    def __init__(
        self,
        predictions: list[PredictionPoint],
        government_clean: list[tuple[str, GeoPoint]],
        government_raw: dict,
        log: VerdictLog,
        default_d: float = 250.0,
    ):
        self.predictions = predictions
        self.by_id = {p.tile_id: p for p in predictions}
        self.government_clean = government_clean
        self.government_raw = government_raw
        self.log = log
        self.default_d = default_d
        self._cache: dict[tuple[float, float], MatchResult] = {}
        self._cache_lock = threading.Lock()

    @classmethod
    def from_files(
        cls,
        predictions_path: str | Path,
        government_clean_path: str | Path,
        government_raw_path: str | Path,
        verdict_log_path: str | Path,
    ) -> "ServiceState":
        predictions = predictions_from_geojson(json.loads(Path(predictions_path).read_text()))
        clean_doc = json.loads(Path(government_clean_path).read_text())
        clean = []
        for f in clean_doc["features"]:
            lon, lat = f["geometry"]["coordinates"][:2]
            clean.append((str(f["properties"]["id"]), GeoPoint(lat, lon)))
        raw = json.loads(Path(government_raw_path).read_text())
        return cls(predictions, clean, raw, VerdictLog(verdict_log_path))

    def match_at(self, tau: float, d: float) -> MatchResult:
        key = (round(tau, 9), round(d, 9))
        with self._cache_lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        result = match(
            [(p.tile_id, p.location, p.probability) for p in self.predictions],
            self.government_clean,
            MatchConfig(tau=tau, d=d),
        )
        with self._cache_lock:
            self._cache[key] = result
        return result


class VerdictIn(BaseModel):
    prediction_id: str
    decision: Literal["approved", "rejected", "relocated"]
    validator_id: str
    revision: int = 1
    corrected_location: dict | None = None


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="schoolsweep validation service")
    # the validation UI is a static page served from a different origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(RequestValidationError)
    async def malformed_query(request, exc):
        return JSONResponse(status_code=400, content={"detail": jsonable_encoder(exc.errors())})

    def verdict_payload(v: Verdict | None):
        return None if v is None else asdict(v)

    @app.get("/predictions")
    def predictions(
        tau: float = Query(0.0, ge=0.0, le=1.0),
        d: float = Query(None, gt=0.0),
        matched: Literal["all", "matched", "unmatched"] = "all",
    ):
        d = state.default_d if d is None else d
        result = state.match_at(tau, d)
        matched_by_pred = {p.prediction_id: p for p in result.pairs}
        latest = state.log.latest_by_prediction()
        features = []
        selected = [p for p in state.predictions if p.probability > tau]
        selected.sort(key=lambda p: (-p.probability, p.tile_id))
        for p in selected:
            pair = matched_by_pred.get(p.tile_id)
            if matched == "matched" and pair is None:
                continue
            if matched == "unmatched" and pair is not None:
                continue
            features.append(
                {
                    "type": "Feature",
                    "geometry": {
                        "type": "Point",
                        "coordinates": [p.location.lon, p.location.lat],
                    },
                    "properties": {
                        "id": p.tile_id,
                        "probability": p.probability,
                        "matched": pair is not None,
                        "government_id": pair.government_id if pair else None,
                        "distance_to_match_m": pair.distance_m if pair else None,
                        "degenerate_fallback": p.degenerate_fallback,
                        "verdict": verdict_payload(latest.get(p.tile_id)),
                    },
                }
            )
        return {"type": "FeatureCollection", "features": features}

    @app.get("/government")
    def government():
        return state.government_raw

    @app.get("/stats")
    def stats(
        tau: float = Query(0.0, ge=0.0, le=1.0),
        d: float = Query(None, gt=0.0),
    ):
        d = state.default_d if d is None else d
        result = state.match_at(tau, d)
        payload = result.venn()
        payload.update({"tau": tau, "d": d})
        return payload

    @app.post("/verdicts")
    def post_verdict(body: VerdictIn):
        if body.prediction_id not in state.by_id:
            raise HTTPException(status_code=404, detail=f"unknown prediction {body.prediction_id!r}")
        lat = lon = None
        if body.corrected_location is not None:
            lat = body.corrected_location.get("lat")
            lon = body.corrected_location.get("lon")
        try:
            verdict = Verdict(
                prediction_id=body.prediction_id,
                decision=body.decision,
                validator_id=body.validator_id,
                revision=body.revision,
                timestamp=now_utc(),
                corrected_lat=lat,
                corrected_lon=lon,
            )
        except VerdictError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        try:
            stored, appended = state.log.record(verdict)
        except StaleRevisionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"status": "recorded" if appended else "duplicate", "verdict": asdict(stored)}

    @app.get("/export")
    def export(format: Literal["geojson"] = "geojson"):
        latest = state.log.latest_by_prediction()
        features = []
        for p in sorted(state.predictions, key=lambda p: p.tile_id):
            verdict = latest.get(p.tile_id)
            if verdict is None or verdict.decision == "rejected":
                continue
            if verdict.decision == "relocated":
                lon, lat = verdict.corrected_lon, verdict.corrected_lat
            else:
                lon, lat = p.location.lon, p.location.lat
            features.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [lon, lat]},
                    "properties": {
                        "id": p.tile_id,
                        "probability": p.probability,
                        "decision": verdict.decision,
                        "validator_id": verdict.validator_id,
                    },
                }
            )
        return {"type": "FeatureCollection", "features": features}

    return app
