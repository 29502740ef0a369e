"""Synthetic tile imagery and a complete fixture country.

Tiles are rendered terrain with rectangular "buildings".  School tiles
carry a compact multi-part motif (two cyan-roofed buildings plus a sandy
court) whose parts all sit within 8 px of the motif center, so a correct
localization peak is always within tolerance.  Clutter buildings use
other palettes.  Rendering is a pure function of (geometry, seed), which
keeps sweeps reproducible across worker counts.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .geo import GeoPoint, ProjectedPoint, TileSpec, project, unproject
from .ingest import RasterGrid, write_ascii_grid

MOTIF_HALF_PX = 8  # motif parts stay inside this radius around the center

_SCHOOL_ROOF = np.array([0.20, 0.78, 0.88])
_SCHOOL_COURT = np.array([0.88, 0.82, 0.55])
_CLUTTER_PALETTES = [
    np.array([0.62, 0.30, 0.22]),  # red roof
    np.array([0.55, 0.55, 0.55]),  # gray roof
    np.array([0.78, 0.75, 0.70]),  # pale roof
]
_ROAD = np.array([0.45, 0.44, 0.42])


def _fill(img: np.ndarray, r0: int, c0: int, h: int, w: int, color: np.ndarray):
    size = img.shape[1]
    r1, c1 = max(0, r0), max(0, c0)
    r2, c2 = min(size, r0 + h), min(size, c0 + w)
    if r1 < r2 and c1 < c2:
        img[:, r1:r2, c1:c2] = color[:, None, None]


def _background(size: int, rng: np.random.Generator) -> np.ndarray:
    base = np.array([0.32, 0.40, 0.28])
    img = np.empty((3, size, size))
    coarse = rng.normal(0.0, 1.0, (3, 4, 4))
    reps = math.ceil(size / 4)
    lowfreq = np.repeat(np.repeat(coarse, reps, axis=1), reps, axis=2)[:, :size, :size]
    img[:] = base[:, None, None] + 0.05 * lowfreq + rng.normal(0.0, 0.02, (3, size, size))
    return img


def draw_school_motif(img: np.ndarray, row: int, col: int, rng: np.random.Generator):
    """Multi-part school: main building, wing, and court around (row, col)."""
    jitter = lambda: rng.integers(-1, 2)
    roof = np.clip(_SCHOOL_ROOF + rng.normal(0.0, 0.03, 3), 0.0, 1.0)
    _fill(img, row - 5 + jitter(), col - 4, 4, 9, roof)
    _fill(img, row - 1, col - 5 + jitter(), 6, 4, roof)
    _fill(img, row + 1 + jitter(), col + 1, 4, 5, np.clip(_SCHOOL_COURT + rng.normal(0.0, 0.03, 3), 0, 1))


def draw_clutter(img: np.ndarray, rng: np.random.Generator, count: int):
    size = img.shape[1]
    if rng.random() < 0.5:
        pos = int(rng.integers(0, size - 2))
        if rng.random() < 0.5:
            img[:, pos : pos + 2, :] = _ROAD[:, None, None]
        else:
            img[:, :, pos : pos + 2] = _ROAD[:, None, None]
    for _ in range(count):
        palette = _CLUTTER_PALETTES[int(rng.integers(0, len(_CLUTTER_PALETTES)))]
        color = np.clip(palette + rng.normal(0.0, 0.04, 3), 0.0, 1.0)
        h, w = int(rng.integers(3, 8)), int(rng.integers(3, 8))
        r0 = int(rng.integers(0, size - h))
        c0 = int(rng.integers(0, size - w))
        _fill(img, r0, c0, h, w, color)


def render_tile(
    size: int,
    rng: np.random.Generator,
    school_centers: list[tuple[int, int]] = (),
    clutter: int | None = None,
) -> np.ndarray:
    img = _background(size, rng)
    if clutter is None:
        clutter = int(rng.integers(2, 6))
    draw_clutter(img, rng, clutter)
    for row, col in school_centers:
        draw_school_motif(img, row, col, rng)
    return np.clip(img, 0.0, 1.0)


def make_classification_set(
    n: int, seed: int, size: int = 64
) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int] | None]]:
    """n tiles at a 1:2 school:non-school ratio, with planted motif centers.

    Returns (images [n, 3, size, size], labels, centers); centers[i] is the
    motif (row, col) for school tiles, None otherwise.
    """
    rng = np.random.default_rng(seed)
    n_school = n // 3
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_school] = 1
    rng.shuffle(labels)
    images = np.empty((n, 3, size, size))
    centers: list[tuple[int, int] | None] = []
    margin = MOTIF_HALF_PX + 4
    for i in range(n):
        if labels[i]:
            row = int(rng.integers(margin, size - margin))
            col = int(rng.integers(margin, size - margin))
            images[i] = render_tile(size, rng, [(row, col)])
            centers.append((row, col))
        else:
            images[i] = render_tile(size, rng)
            centers.append(None)
    return images, labels, centers


class SyntheticImageStore:
    """Image store rendering tiles from a fixed school layout.

    Rendering is deterministic per tile footprint: the RNG is derived from
    the store seed and the quantized tile corner, never from call order.
    """

    def __init__(self, schools: list[GeoPoint], seed: int = 0):
        self.schools = list(schools)
        self.seed = seed
        self._projected = [project(p) for p in self.schools]

    def _tile_rng(self, tile: TileSpec) -> np.random.Generator:
        qx = int(round(tile.min_corner.x * 100.0)) + (1 << 48)
        qy = int(round(tile.min_corner.y * 100.0)) + (1 << 48)
        return np.random.default_rng([self.seed, qx, qy])

    def get(self, tile: TileSpec, tile_id: str = "") -> np.ndarray:
        rng = self._tile_rng(tile)
        res = tile.resolution_m_per_px
        centers = []
        margin_m = MOTIF_HALF_PX * res
        for q in self._projected:
            if (
                tile.min_corner.x - margin_m <= q.x <= tile.min_corner.x + tile.size_m + margin_m
                and tile.min_corner.y - margin_m <= q.y <= tile.min_corner.y + tile.size_m + margin_m
            ):
                col = int(round((q.x - tile.min_corner.x) / res - 0.5))
                row = int(round((tile.min_corner.y + tile.size_m - q.y) / res - 0.5))
                centers.append((row, col))
        return render_tile(tile.px, rng, centers)


def make_fixture_country(directory: str | Path, seed: int = 7, n_schools: int = 12) -> dict:
    """Write a self-contained fixture country and return its manifest.

    Produces boundary, settlement and SMOD rasters, government/OSM/Overture
    point files (with planted duplicates, erroneous coordinates, excluded
    names, and malformed rows), plus the truth school layout consumed by
    SyntheticImageStore.  Settlement: the west half lives in raster A and
    the east half in raster B (exercising the any-raster rule), with an
    unsettled "lake" carved out around a phantom government point.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    center = GeoPoint(14.70, -17.45)
    c = project(center)
    span = 1600.0  # region half-size in projected meters
    lake_center = ProjectedPoint(c.x + span - 450.0, c.y - span + 450.0)
    lake_radius = 320.0

    def far_from(q: ProjectedPoint, points, min_d: float) -> bool:
        return all(math.hypot(q.x - t.x, q.y - t.y) >= min_d for t in points)

    # truth schools: well-separated, inside the core, outside the lake
    truth: list[ProjectedPoint] = []
    while len(truth) < n_schools:
        q = ProjectedPoint(
            c.x + rng.uniform(-span + 450, span - 450), c.y + rng.uniform(-span + 450, span - 450)
        )
        if far_from(q, truth, 450.0) and math.hypot(q.x - lake_center.x, q.y - lake_center.y) > lake_radius + 300.0:
            truth.append(q)
    truth_geo = [unproject(q) for q in truth]

    boundary_ring = [
        unproject(ProjectedPoint(c.x + dx, c.y + dy))
        for dx, dy in [(-span, -span), (span, -span), (span, span), (-span, span), (-span, -span)]
    ]
    boundary = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[p.lon, p.lat] for p in boundary_ring]],
                },
                "properties": {"name": "fixture"},
            }
        ],
    }
    (directory / "boundary.geojson").write_text(json.dumps(boundary, sort_keys=True))

    # settlement rasters (20 m cells)
    cell = 20.0
    cells = int(2 * span / cell)
    origin = ProjectedPoint(c.x - span, c.y - span)
    cols, rows = np.meshgrid(np.arange(cells), np.arange(cells))
    cx = origin.x + (cols + 0.5) * cell
    cy = origin.y + (cells - rows - 0.5) * cell
    lake = (cx - lake_center.x) ** 2 + (cy - lake_center.y) ** 2 <= lake_radius**2
    west = (cx < c.x) & ~lake
    east = (cx >= c.x) & ~lake
    for name, grid in (("settlement_a.asc", west), ("settlement_b.asc", east)):
        write_ascii_grid(
            RasterGrid(origin, cell, cells, cells, grid.astype(np.int64)), directory / name
        )

    # degree-of-urbanization raster (1 km cells): west half urban, east rural
    smod_cells = max(4, int(math.ceil(2 * span / 1000.0)) + 2)
    smod_origin = ProjectedPoint(c.x - smod_cells * 500.0, c.y - smod_cells * 500.0)
    smod = np.full((smod_cells, smod_cells), 13, np.int64)
    smod[:, : smod_cells // 2] = 30
    write_ascii_grid(RasterGrid(smod_origin, 1000.0, smod_cells, smod_cells, smod), directory / "smod.asc")

    def jittered(q: ProjectedPoint, meters: float) -> GeoPoint:
        return unproject(ProjectedPoint(q.x + rng.uniform(-meters, meters), q.y + rng.uniform(-meters, meters)))

    # government: truth 0..n-3 slightly noisy, two erroneous points in
    # settled areas without schools, one phantom in the lake, one
    # keyword-excluded duplicate
    n_gov = n_schools - 2
    gov_features = [
        (f"G{i:02d}", f"Government School {i}", jittered(truth[i], 25.0)) for i in range(n_gov)
    ]
    erroneous: list[ProjectedPoint] = []
    while len(erroneous) < 2:
        q = ProjectedPoint(
            c.x + rng.uniform(-span + 450, span - 450), c.y + rng.uniform(-span + 450, span - 450)
        )
        if far_from(q, truth, 450.0) and far_from(q, erroneous, 450.0) and far_from(q, [lake_center], lake_radius + 300.0):
            erroneous.append(q)
    for k, q in enumerate(erroneous):
        gov_features.append((f"G8{k}", f"Misplaced School {k}", unproject(q)))
    gov_features.append(("G90", "Lakebed Phantom School", unproject(lake_center)))
    gov_features.append(("G91", "Capital Kindergarten", jittered(truth[0], 40.0)))
    gov = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.lon, p.lat]},
                "properties": {"id": pid, "name": name},
            }
            for pid, name, p in gov_features
        ],
    }
    (directory / "gov.geojson").write_text(json.dumps(gov, sort_keys=True))

    # osm: duplicates of two government schools, one new school, one
    # keyword-excluded name
    osm_features = [
        ("O00", "School Zero (community)", jittered(truth[0], 60.0)),
        ("O01", "School One (community)", jittered(truth[1], 60.0)),
        (f"O{n_gov:02d}", "New Hope School", jittered(truth[n_gov], 20.0)),
        ("O90", "Sunrise University", jittered(truth[2], 500.0)),
    ]
    osm = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.lon, p.lat]},
                "properties": {"id": pid, "name": name},
            }
            for pid, name, p in osm_features
        ],
    }
    (directory / "osm.geojson").write_text(json.dumps(osm, sort_keys=True))

    # overture: CSV with the last truth school and one malformed row
    p_last = jittered(truth[n_schools - 1], 20.0)
    (directory / "overture.csv").write_text(
        "id,name,lat,lon\n"
        f"V00,Lakeside School,{p_last.lat!r},{p_last.lon!r}\n"
        "V90,Broken Row School,91,0\n"
    )

    truth_doc = {
        "seed": seed,
        "schools": [{"lat": p.lat, "lon": p.lon} for p in truth_geo],
    }
    (directory / "truth.json").write_text(json.dumps(truth_doc, sort_keys=True, indent=2) + "\n")
    return {
        "directory": str(directory),
        "truth_schools": len(truth_geo),
        "boundary": "boundary.geojson",
        "rasters": ["settlement_a.asc", "settlement_b.asc"],
        "smod": "smod.asc",
        "points": {"government": "gov.geojson", "osm": "osm.geojson", "overture": "overture.csv"},
    }


def load_truth_store(path: str | Path) -> SyntheticImageStore:
    doc = json.loads(Path(path).read_text())
    schools = [GeoPoint(s["lat"], s["lon"]) for s in doc["schools"]]
    return SyntheticImageStore(schools, seed=doc.get("seed", 0))
