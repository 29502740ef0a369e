"""Dataset assembly: load point sources, exclude non-target institutions by
keyword, collapse duplicate coordinates, drop points outside settlements,
and sample negatives from populated areas.

Malformed input rows are never silently dropped; every stage reports what
it removed and why, and the full chain emits an audit report.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .geo import (
    GeoPoint,
    ProjectedPoint,
    haversine_distance,
    overlap_components,
    project,
    unproject,
    violating_pairs,
)

SOURCES = ("government", "osm", "overture", "sampled")
SOURCE_PRIORITY = {s: i for i, s in enumerate(SOURCES)}
CLASS_LABELS = ("school", "non_school")


class DatasetError(ValueError):
    """Structural dataset problem (duplicate ids, unknown formats, ...)."""


@dataclass(frozen=True)
class PoiRecord:
    id: str
    name: str
    source: str
    class_label: str
    location: GeoPoint
    stratum: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}, expected one of {SOURCES}")
        if self.class_label not in CLASS_LABELS:
            raise ValueError(f"unknown class {self.class_label!r}, expected one of {CLASS_LABELS}")


@dataclass
class SchoolDataset:
    records: list[PoiRecord]
    provenance: dict = field(default_factory=dict)

    def by_class(self, class_label: str) -> list[PoiRecord]:
        return [r for r in self.records if r.class_label == class_label]


@dataclass
class RasterGrid:
    """Row-major integer grid; row 0 is the northernmost row (file order).

    `origin` is the lower-left (south-west) corner in projected meters.
    """

    origin: ProjectedPoint
    cell_size_m: float
    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.height, self.width):
            raise ValueError(
                f"value grid {self.values.shape} does not match {self.height}x{self.width}"
            )
        if self.cell_size_m <= 0:
            raise ValueError(f"cell size must be positive, got {self.cell_size_m}")

    def cell_center(self, row: int, col: int) -> ProjectedPoint:
        return ProjectedPoint(
            self.origin.x + (col + 0.5) * self.cell_size_m,
            self.origin.y + (self.height - row - 0.5) * self.cell_size_m,
        )

    def cell_of(self, q: ProjectedPoint) -> tuple[int, int] | None:
        col = int(math.floor((q.x - self.origin.x) / self.cell_size_m))
        row_from_bottom = int(math.floor((q.y - self.origin.y) / self.cell_size_m))
        row = self.height - 1 - row_from_bottom
        if 0 <= row < self.height and 0 <= col < self.width:
            return row, col
        return None

    def value_at(self, q: ProjectedPoint) -> int | None:
        cell = self.cell_of(q)
        return None if cell is None else int(self.values[cell])

    def covers(self, q: ProjectedPoint, margin_m: float = 0.0) -> bool:
        return (
            self.origin.x - margin_m <= q.x <= self.origin.x + self.width * self.cell_size_m + margin_m
            and self.origin.y - margin_m <= q.y <= self.origin.y + self.height * self.cell_size_m + margin_m
        )

    def nonzero_count_within(self, point: GeoPoint, buffer_m: float) -> int:
        """Nonzero cells whose centers lie within buffer_m (haversine) of point."""
        q = project(point)
        margin = buffer_m / max(0.05, math.cos(math.radians(point.lat))) * 1.01
        col_lo = max(0, int((q.x - margin - self.origin.x) // self.cell_size_m))
        col_hi = min(self.width - 1, int((q.x + margin - self.origin.x) // self.cell_size_m))
        top_of = lambda row_from_bottom: self.height - 1 - row_from_bottom
        row_lo_b = max(0, int((q.y - margin - self.origin.y) // self.cell_size_m))
        row_hi_b = min(self.height - 1, int((q.y + margin - self.origin.y) // self.cell_size_m))
        count = 0
        for row_b in range(row_lo_b, row_hi_b + 1):
            row = top_of(row_b)
            for col in range(col_lo, col_hi + 1):
                if self.values[row, col] and haversine_distance(
                    point, unproject(self.cell_center(row, col))
                ) <= buffer_m:
                    count += 1
        return count


# ---------------------------------------------------------------------------
# file formats


def read_ascii_grid(path: str | Path) -> RasterGrid:
    """ESRI ASCII grid with projected-meter coordinates; NODATA becomes 0."""
    tokens = Path(path).read_text().split()
    header: dict[str, float] = {}
    i = 0
    keys = {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"}
    while i + 1 < len(tokens) and tokens[i].lower() in keys:
        header[tokens[i].lower()] = float(tokens[i + 1])
        i += 2
    missing = {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize"} - set(header)
    if missing:
        raise DatasetError(f"{path}: missing raster header keys {sorted(missing)}")
    w, h = int(header["ncols"]), int(header["nrows"])
    values = np.array(tokens[i:], dtype=np.int64).reshape(h, w)
    nodata = header.get("nodata_value")
    if nodata is not None:
        values[values == int(nodata)] = 0
    return RasterGrid(ProjectedPoint(header["xllcorner"], header["yllcorner"]), header["cellsize"], w, h, values)


def write_ascii_grid(grid: RasterGrid, path: str | Path) -> None:
    lines = [
        f"ncols {grid.width}",
        f"nrows {grid.height}",
        f"xllcorner {grid.origin.x!r}",
        f"yllcorner {grid.origin.y!r}",
        f"cellsize {grid.cell_size_m!r}",
        "NODATA_value -9999",
    ]
    lines.extend(" ".join(str(int(v)) for v in row) for row in grid.values)
    Path(path).write_text("\n".join(lines) + "\n")


def _record_from_fields(id_, name, lat, lon, source, class_label) -> PoiRecord:
    return PoiRecord(str(id_), str(name), source, class_label, GeoPoint(float(lat), float(lon)))


def load_points(
    path: str | Path, source: str, class_label: str = "school"
) -> tuple[list[PoiRecord], list[dict]]:
    """Load a GeoJSON FeatureCollection of Points or an id,name,lat,lon CSV.

    Returns (records, rejects); rejects carry the failure reason instead of
    being dropped silently.  Duplicate ids are an error, not a reject.
    """
    path = Path(path)
    text = path.read_text()
    records: list[PoiRecord] = []
    rejects: list[dict] = []
    if path.suffix.lower() in (".geojson", ".json") or text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}: not valid JSON: {exc}") from exc
        if doc.get("type") != "FeatureCollection":
            raise DatasetError(f"{path}: expected a GeoJSON FeatureCollection")
        for i, feature in enumerate(doc.get("features", [])):
            props = feature.get("properties") or {}
            geom = feature.get("geometry") or {}
            fid = props.get("id", feature.get("id"))
            try:
                if geom.get("type") != "Point":
                    raise ValueError(f"geometry type {geom.get('type')!r} is not Point")
                if fid in (None, ""):
                    raise ValueError("missing id")
                lon, lat = geom["coordinates"][:2]
                records.append(_record_from_fields(fid, props.get("name", ""), lat, lon, source, class_label))
            except (ValueError, KeyError, TypeError, IndexError) as exc:
                rejects.append({"feature": i, "id": fid, "reason": _reason(exc)})
    elif path.suffix.lower() == ".csv":
        reader = csv.DictReader(text.splitlines())
        expected = {"id", "name", "lat", "lon"}
        if reader.fieldnames is None or not expected <= set(reader.fieldnames):
            raise DatasetError(f"{path}: CSV must have headers id,name,lat,lon")
        for i, row in enumerate(reader):
            try:
                records.append(
                    _record_from_fields(row["id"], row["name"], row["lat"], row["lon"], source, class_label)
                )
            except (ValueError, TypeError) as exc:
                rejects.append({"row": i, "id": row.get("id"), "reason": _reason(exc)})
    else:
        raise DatasetError(f"{path}: unknown format (expected GeoJSON or CSV)")
    seen: dict[str, int] = {}
    for r in records:
        seen[r.id] = seen.get(r.id, 0) + 1
    duplicates = sorted(k for k, v in seen.items() if v > 1)
    if duplicates:
        raise DatasetError(f"{path}: duplicate ids {duplicates}")
    return records, rejects


def _reason(exc: Exception) -> str:
    msg = str(exc)
    if "lat out of range" in msg:
        return "lat out of range"
    if "lon out of range" in msg:
        return "lon out of range"
    return msg


def records_to_geojson(records: Sequence[PoiRecord]) -> dict:
    features = []
    for r in records:
        props = {"id": r.id, "name": r.name, "source": r.source, "class_label": r.class_label}
        if r.stratum is not None:
            props["stratum"] = r.stratum
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [r.location.lon, r.location.lat]},
                "properties": props,
            }
        )
    return {"type": "FeatureCollection", "features": features}


def write_points_geojson(records: Sequence[PoiRecord], path: str | Path) -> None:
    Path(path).write_text(json.dumps(records_to_geojson(records), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# cleaning stages

DEFAULT_EXCLUSION_KEYWORDS: dict[str, list[str]] = {
    "early_childhood": ["preschool", "pre-school", "kindergarten", "nursery", "daycare", "creche"],
    "tertiary": ["university", "college", "polytechnic"],
    "sports": ["swimming", "taekwondo", "karate", "judo", "sports academy"],
    "other": ["driving school", "beauty school", "language school", "music school", "culinary"],
}


@dataclass
class ExclusionRules:
    keywords: dict[str, list[str]] = field(
        default_factory=lambda: {k: list(v) for k, v in DEFAULT_EXCLUSION_KEYWORDS.items()}
    )

    def __post_init__(self):
        if not any(self.keywords.values()):
            raise ValueError("exclusion rules must contain at least one keyword")
        self._patterns = [
            (category, kw, re.compile(rf"\b{re.escape(kw)}\b", re.IGNORECASE))
            for category, kws in self.keywords.items()
            for kw in kws
        ]

    def match(self, name: str) -> tuple[str, str] | None:
        for category, kw, pattern in self._patterns:
            if pattern.search(name):
                return category, kw
        return None


def filter_keywords(
    records: Sequence[PoiRecord], rules: ExclusionRules
) -> tuple[list[PoiRecord], list[dict]]:
    """Split records into (kept, excluded); exclusions carry the matched keyword."""
    kept: list[PoiRecord] = []
    excluded: list[dict] = []
    for r in records:
        hit = rules.match(r.name)
        if hit is None:
            kept.append(r)
        else:
            excluded.append({"id": r.id, "name": r.name, "category": hit[0], "keyword": hit[1]})
    return kept, excluded


def dedup_cluster(points: Sequence[PoiRecord], buffer_r: float = 150.0) -> list[PoiRecord]:
    """Collapse groups of overlapping buffers to one representative each.

    Merging is transitive (connected components), which guarantees all
    output pairwise distances >= 2 * buffer_r.  The representative is the
    highest-priority source (government > osm > overture > sampled), ties
    broken by lexicographic id.  Output preserves input order.
    """
    if not points:
        raise ValueError("dedup_cluster needs at least one point")
    comps = overlap_components([p.location for p in points], buffer_r)
    best: dict[int, int] = {}
    for i, comp in enumerate(comps):
        j = best.get(comp)
        if j is None or (SOURCE_PRIORITY[points[i].source], points[i].id) < (
            SOURCE_PRIORITY[points[j].source],
            points[j].id,
        ):
            best[comp] = i
    keep = sorted(best.values())
    return [points[i] for i in keep]


def settlement_filter(
    points: Sequence[PoiRecord], rasters: Sequence[RasterGrid], buffer: float = 150.0
) -> tuple[list[PoiRecord], list[dict]]:
    """Drop points with zero settlement cells within the buffer across all rasters."""
    if not rasters:
        raise ValueError("settlement_filter needs at least one raster")
    kept: list[PoiRecord] = []
    dropped: list[dict] = []
    for r in points:
        q = project(r.location)
        covering = [g for g in rasters if g.covers(q, margin_m=buffer * 2.0)]
        if not covering:
            dropped.append({"id": r.id, "reason": "no coverage"})
            continue
        if any(g.nonzero_count_within(r.location, buffer) > 0 for g in covering):
            kept.append(r)
        else:
            dropped.append({"id": r.id, "reason": "no settlement within buffer"})
    return kept, dropped


@dataclass
class SamplingWarning:
    requested: int
    sampled: int
    reason: str = "insufficient populated area under spacing constraints"


def sample_negatives(
    rasters: Sequence[RasterGrid],
    schools: Sequence[PoiRecord],
    ratio: float = 2.0,
    min_spacing: float = 300.0,
    min_school_dist: float = 300.0,
    seed: int = 0,
) -> tuple[list[PoiRecord], SamplingWarning | None]:
    """Sample non-school points from settlement cells.

    Candidates are nonzero cell centers jittered uniformly within their
    cell; accepted points keep min_spacing from each other and
    min_school_dist from every school.  Deterministic under seed.  When the
    area cannot support the requested count, returns the greedy-maximal set
    plus a structured warning.
    """
    if not rasters:
        raise ValueError("sample_negatives needs at least one raster")
    target = round(ratio * len(schools))
    rng = np.random.default_rng(seed)
    candidates: list[tuple[int, int, int]] = []
    for gi, g in enumerate(rasters):
        for row, col in np.argwhere(g.values != 0):
            candidates.append((gi, int(row), int(col)))
    order = rng.permutation(len(candidates))
    school_lats = np.array([s.location.lat for s in schools])
    school_lons = np.array([s.location.lon for s in schools])
    accepted: list[GeoPoint] = []
    acc_lats: list[float] = []
    acc_lons: list[float] = []
    for idx in order:
        if len(accepted) >= target:
            break
        gi, row, col = candidates[idx]
        g = rasters[gi]
        center = g.cell_center(row, col)
        half = g.cell_size_m / 2.0
        jittered = ProjectedPoint(
            center.x + rng.uniform(-half, half), center.y + rng.uniform(-half, half)
        )
        p = unproject(jittered)
        if len(schools) and _min_haversine(p, school_lats, school_lons) < min_school_dist:
            continue
        if accepted and _min_haversine(p, np.array(acc_lats), np.array(acc_lons)) < min_spacing:
            continue
        accepted.append(p)
        acc_lats.append(p.lat)
        acc_lons.append(p.lon)
    records = [
        PoiRecord(f"sampled:{i:06d}", "", "sampled", "non_school", p)
        for i, p in enumerate(accepted)
    ]
    warning = None
    if len(records) < target:
        warning = SamplingWarning(requested=target, sampled=len(records))
    return records, warning


def _min_haversine(p: GeoPoint, lats: np.ndarray, lons: np.ndarray) -> float:
    phi1 = math.radians(p.lat)
    phi2 = np.radians(lats)
    dphi = np.radians(lats - p.lat)
    dlam = np.radians(lons - p.lon)
    h = np.sin(dphi / 2.0) ** 2 + math.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    return float(2.0 * 6_371_000.0 * np.arcsin(np.sqrt(np.minimum(1.0, h))).min())


# ---------------------------------------------------------------------------
# full chain


def run_ingest(
    sources: list[tuple[str, str, list[PoiRecord], list[dict]]],
    settlement_rasters: Sequence[RasterGrid],
    rules: ExclusionRules | None = None,
    country: str = "",
    dedup_buffer_m: float = 150.0,
    settlement_buffer_m: float = 150.0,
    negative_ratio: float = 2.0,
    min_spacing_m: float = 300.0,
    min_school_dist_m: float = 300.0,
    seed: int = 0,
) -> tuple[SchoolDataset, dict]:
    """Full cleaning chain; returns the dataset and an audit report.

    `sources` entries are (path, source tag, records, rejects) as produced
    by load_points; ids get a source prefix so the merged dataset stays
    unique.
    """
    rules = rules or ExclusionRules()
    merged: list[PoiRecord] = []
    audit: dict = {"country": country, "stages": {}, "rejects": {}}
    for path, tag, records, rejects in sources:
        for r in records:
            merged.append(
                PoiRecord(f"{tag}:{r.id}", r.name, r.source, r.class_label, r.location)
            )
        audit["rejects"][path] = rejects
    audit["stages"]["loaded"] = len(merged)
    kept, excluded = filter_keywords(merged, rules)
    audit["stages"]["after_keyword_filter"] = len(kept)
    audit["keyword_exclusions"] = excluded
    if not kept:
        raise DatasetError("no school records remain after keyword filtering")
    deduped = dedup_cluster(kept, dedup_buffer_m)
    audit["stages"]["after_dedup"] = len(deduped)
    settled, dropped = settlement_filter(deduped, settlement_rasters, settlement_buffer_m)
    audit["stages"]["after_settlement_filter"] = len(settled)
    audit["settlement_drops"] = dropped
    negatives, warning = sample_negatives(
        settlement_rasters, settled, negative_ratio, min_spacing_m, min_school_dist_m, seed
    )
    audit["stages"]["negatives_sampled"] = len(negatives)
    if warning is not None:
        audit["sampling_warning"] = {
            "requested": warning.requested,
            "sampled": warning.sampled,
            "reason": warning.reason,
        }
    records = settled + negatives
    spacing = violating_pairs([r.location for r in settled], min_spacing_m)
    if spacing:
        raise DatasetError(f"spacing audit failed for {len(spacing)} school pairs: {spacing[:5]}")
    dataset = SchoolDataset(
        records,
        provenance={
            "country": country,
            "source_files": [path for path, *_ in sources],
            "pipeline_version": __version__,
        },
    )
    audit["total_records"] = len(records)
    return dataset, audit
