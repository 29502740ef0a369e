"""Country-scale sweep: overlapping tile lattice, settlement prefilter,
score + localize above the optimized threshold, and buffer aggregation.

The lattice is anchored at the boundary's projected bounding-box min
corner with a stride of half the tile size; a tile is emitted iff it
intersects the boundary polygon.  All stages are deterministic: tile
ordering is row-major, per-tile work is pure, and aggregation keeps the
max-probability point per overlap component (ties to the lexicographically
smallest tile id).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from shapely.geometry import Polygon, box

from .cam import compute_cam, peak_to_geo, upsample_cam
from .geo import GeoPoint, ProjectedPoint, TileSpec, overlap_components, project
from .imagestore import ImageStore, MissingImageError
from .ingest import RasterGrid


@dataclass(frozen=True)
class PredictionPoint:
    location: GeoPoint
    probability: float
    tile_id: str
    cam_peak: float
    degenerate_fallback: bool = False


@dataclass
class TileGrid:
    boundary: Polygon  # projected meters
    tiles: list[tuple[str, TileSpec]]
    size_m: float
    stride_m: float


@dataclass
class AggregationConfig:
    buffer_r: float = 50.0

    def __post_init__(self):
        if self.buffer_r <= 0:
            raise ValueError(f"buffer radius must be positive, got {self.buffer_r}")


def boundary_to_polygon(ring: Sequence[GeoPoint]) -> Polygon:
    """Projected polygon from a WGS84 ring."""
    if len(ring) < 3:
        raise ValueError("boundary needs at least 3 points")
    poly = Polygon([(q.x, q.y) for q in (project(p) for p in ring)])
    if poly.is_empty or not poly.is_valid or poly.area == 0.0:
        raise ValueError("degenerate boundary polygon")
    return poly


def read_boundary_geojson(path: str | Path) -> list[GeoPoint]:
    doc = json.loads(Path(path).read_text())
    if doc.get("type") == "FeatureCollection":
        geom = doc["features"][0]["geometry"]
    elif doc.get("type") == "Feature":
        geom = doc["geometry"]
    else:
        geom = doc
    if geom.get("type") != "Polygon":
        raise ValueError(f"expected a Polygon boundary, got {geom.get('type')!r}")
    return [GeoPoint(lat, lon) for lon, lat in geom["coordinates"][0]]


def generate_tiles(
    ring: Sequence[GeoPoint],
    size_m: float = 300.0,
    overlap: float = 0.5,
    px: int = 500,
) -> TileGrid:
    """Row-major lattice of overlapping tiles intersecting the boundary."""
    if not 0.0 < overlap < 1.0:
        raise ValueError(f"overlap must be in (0, 1), got {overlap}")
    poly = boundary_to_polygon(ring)
    stride = size_m * (1.0 - overlap)
    x0, y0, x1, y1 = poly.bounds
    nx = int(math.floor((x1 - x0) / stride)) + 1
    ny = int(math.floor((y1 - y0) / stride)) + 1
    resolution = size_m / px
    tiles: list[tuple[str, TileSpec]] = []
    for iy in range(ny):
        for ix in range(nx):
            ox = x0 + ix * stride
            oy = y0 + iy * stride
            if poly.intersects(box(ox, oy, ox + size_m, oy + size_m)):
                tile = TileSpec(ProjectedPoint(ox, oy), size_m, px, resolution)
                tiles.append((f"t{iy:04d}_{ix:04d}", tile))
    if not tiles:
        raise ValueError("boundary does not intersect any lattice tile")
    return TileGrid(poly, tiles, size_m, stride)


def prefilter_tiles(grid: TileGrid, rasters: Sequence[RasterGrid]) -> list[tuple[str, TileSpec]]:
    """Keep tiles containing at least one nonzero settlement cell center in
    any raster."""
    if not grid.tiles:
        return []
    x0, y0, _, _ = grid.boundary.bounds
    by_index = {tid: tile for tid, tile in grid.tiles}
    stride = grid.stride_m
    size = grid.size_m
    keep: set[str] = set()
    for raster in rasters:
        for row, col in np.argwhere(raster.values != 0):
            center = raster.cell_center(int(row), int(col))
            ix_hi = int(math.floor((center.x - x0) / stride))
            iy_hi = int(math.floor((center.y - y0) / stride))
            span = int(math.ceil(size / stride))  # lattice steps covered by one tile
            for iy in range(max(0, iy_hi - span + 1), iy_hi + 1):
                for ix in range(max(0, ix_hi - span + 1), ix_hi + 1):
                    tid = f"t{iy:04d}_{ix:04d}"
                    tile = by_index.get(tid)
                    if tile is None:
                        continue
                    if (
                        tile.min_corner.x <= center.x <= tile.min_corner.x + size
                        and tile.min_corner.y <= center.y <= tile.min_corner.y + size
                    ):
                        keep.add(tid)
    return [(tid, tile) for tid, tile in grid.tiles if tid in keep]


@dataclass
class SweepResult:
    predictions: list[PredictionPoint]
    skipped_tiles: list[str] = field(default_factory=list)
    scored: int = 0
    positives: int = 0


def sweep(
    tiles: Sequence[tuple[str, TileSpec]],
    backend,
    store: ImageStore,
    cam_method: str,
    tau_star: float,
    workers: int = 1,
) -> SweepResult:
    """Score every tile; localize school peaks for tiles above tau_star.

    Degenerate CAMs fall back to the tile center with a flag, so no
    positive tile silently vanishes.  Output order follows tile order
    regardless of worker count.
    """

    def process(item: tuple[str, TileSpec]):
        tid, tile = item
        try:
            image = store.get(tile, tid)
        except MissingImageError:
            return ("skipped", tid)
        bundle = backend.bundle(image)
        probability = float(bundle.softmax[1])
        if probability <= tau_star:
            return ("negative", tid)
        cam = compute_cam(cam_method, bundle)
        if cam.degenerate:
            return (
                "prediction",
                PredictionPoint(tile.center(), probability, tid, 0.0, degenerate_fallback=True),
            )
        up = upsample_cam(cam, tile.px)
        point, peak = peak_to_geo(up, tile)
        return ("prediction", PredictionPoint(point, probability, tid, peak))

    if workers <= 1:
        outcomes = [process(item) for item in tiles]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(process, tiles))
    result = SweepResult(predictions=[])
    for outcome in outcomes:
        kind, payload = outcome
        if kind == "skipped":
            result.skipped_tiles.append(payload)
        elif kind == "negative":
            result.scored += 1
        else:
            result.scored += 1
            result.positives += 1
            result.predictions.append(payload)
    return result


def aggregate(
    predictions: Sequence[PredictionPoint], config: AggregationConfig = AggregationConfig()
) -> list[PredictionPoint]:
    """Merge overlap components, keeping the max-probability point each."""
    if not predictions:
        return []
    comps = overlap_components([p.location for p in predictions], config.buffer_r)
    best: dict[int, int] = {}
    for i, comp in enumerate(comps):
        j = best.get(comp)
        if j is None or (-predictions[i].probability, predictions[i].tile_id) < (
            -predictions[j].probability,
            predictions[j].tile_id,
        ):
            best[comp] = i
    return [predictions[i] for i in sorted(best.values())]


def predictions_to_geojson(predictions: Sequence[PredictionPoint]) -> dict:
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [p.location.lon, p.location.lat],
                },
                "properties": {
                    "probability": round(p.probability, 9),
                    "tile_id": p.tile_id,
                    "cam_peak": round(p.cam_peak, 9),
                    "degenerate_fallback": p.degenerate_fallback,
                },
            }
            for p in predictions
        ],
    }


def predictions_from_geojson(doc: dict) -> list[PredictionPoint]:
    out = []
    for f in doc["features"]:
        lon, lat = f["geometry"]["coordinates"][:2]
        props = f["properties"]
        out.append(
            PredictionPoint(
                GeoPoint(lat, lon),
                float(props["probability"]),
                str(props["tile_id"]),
                float(props.get("cam_peak", 0.0)),
                bool(props.get("degenerate_fallback", False)),
            )
        )
    return out
