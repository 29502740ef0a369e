#!/usr/bin/env python3
"""Deterministic validation-service fixture for frontend tests.

Serves 12 predictions and 9 government points arranged so that the
default matcher yields exactly 7 pairs at (tau=0, d=250), with varied
probabilities so the tau slider changes the counts.
"""

import argparse
import math
import tempfile
from pathlib import Path

import uvicorn

from schoolsweep.geo import GeoPoint
from schoolsweep.nationwide import PredictionPoint
from schoolsweep.valsvc.service import ServiceState, create_app
from schoolsweep.valsvc.verdicts import VerdictLog


def east(meters: float, lat: float = 0.0) -> GeoPoint:
    return GeoPoint(lat, math.degrees(meters / 6_371_000.0))


def build_state(log_dir: Path) -> ServiceState:
    matched_probs = [0.95, 0.90, 0.85, 0.80, 0.75, 0.70, 0.65]
    unmatched_probs = [0.88, 0.78, 0.60, 0.40, 0.30]
    predictions = []
    government = []
    for i, prob in enumerate(matched_probs):
        base = 2000.0 * i
        predictions.append(PredictionPoint(east(base), prob, f"p{i}", 1.0))
        government.append((f"g{i}", east(base + 50.0)))
    government.append(("g7", east(60_000.0)))
    government.append(("g8", east(70_000.0)))
    for i, prob in enumerate(unmatched_probs):
        predictions.append(PredictionPoint(east(120_000.0 + 2000.0 * i), prob, f"q{i}", 1.0))
    gov_raw = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [loc.lon, loc.lat]},
                "properties": {"id": gid, "name": f"School {gid}"},
            }
            for gid, loc in government
        ],
    }
    return ServiceState(predictions, government, gov_raw, VerdictLog(log_dir / "verdicts.jsonl"))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--dir", default=None, help="verdict log directory (default: temp)")
    args = parser.parse_args()
    log_dir = Path(args.dir) if args.dir else Path(tempfile.mkdtemp(prefix="valui-fixture-"))
    log_dir.mkdir(parents=True, exist_ok=True)
    app = create_app(build_state(log_dir))
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
