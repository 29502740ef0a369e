"""Geodesy, projection, and tile-geometry primitives.

Conventions used throughout the pipeline:

* Point-to-point distances are great-circle (haversine) on WGS84 with a
  fixed mean Earth radius of 6,371,000 m.
* Tile geometry lives in spherical Web Mercator (R = 6,378,137 m), which
  gives a square metric grid.  Mercator meter distortion grows with
  latitude; for the target regions (|lat| <= ~35 deg) it stays below ~22%
  and only affects tile footprints, never measured distances.
* Pixel (0, 0) is the top-left pixel of a tile, and a pixel's location is
  its center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

EARTH_RADIUS_M = 6_371_000.0
MERCATOR_RADIUS_M = 6_378_137.0
MERCATOR_MAX_M = math.pi * MERCATOR_RADIUS_M  # 20,037,508.342789244
MERCATOR_MAX_LAT = 85.06


class ProjectionRangeError(ValueError):
    """Latitude outside the validity range of spherical Web Mercator."""


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 coordinate in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate: lat={self.lat}, lon={self.lon}")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"lat out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"lon out of range: {self.lon}")


@dataclass(frozen=True)
class ProjectedPoint:
    """Spherical Web Mercator coordinate in meters."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite projected coordinate: ({self.x}, {self.y})")
        if abs(self.x) > MERCATOR_MAX_M + 1e-6:
            raise ValueError(f"projected x out of range: {self.x}")


@dataclass(frozen=True)
class TileSpec:
    """Square image tile footprint: `min_corner` is the south-west corner."""

    min_corner: ProjectedPoint
    size_m: float = 300.0
    px: int = 500
    resolution_m_per_px: float = 0.6

    def __post_init__(self):
        if self.px <= 0:
            raise ValueError(f"px must be positive, got {self.px}")
        if abs(self.size_m - self.px * self.resolution_m_per_px) > 1e-6 * max(1.0, self.size_m):
            raise ValueError(
                f"inconsistent tile geometry: size_m={self.size_m} != "
                f"px={self.px} * resolution={self.resolution_m_per_px}"
            )

    @property
    def max_corner(self) -> ProjectedPoint:
        return ProjectedPoint(self.min_corner.x + self.size_m, self.min_corner.y + self.size_m)

    def center_projected(self) -> ProjectedPoint:
        half = self.size_m / 2.0
        return ProjectedPoint(self.min_corner.x + half, self.min_corner.y + half)

    def center(self) -> GeoPoint:
        return unproject(self.center_projected())


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two WGS84 points."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def project(p: GeoPoint) -> ProjectedPoint:
    """WGS84 -> spherical Web Mercator meters."""
    if abs(p.lat) >= MERCATOR_MAX_LAT:
        raise ProjectionRangeError(
            f"latitude {p.lat} outside Mercator validity range (|lat| < {MERCATOR_MAX_LAT})"
        )
    x = MERCATOR_RADIUS_M * math.radians(p.lon)
    y = MERCATOR_RADIUS_M * math.log(math.tan(math.pi / 4.0 + math.radians(p.lat) / 2.0))
    return ProjectedPoint(x, y)


def unproject(q: ProjectedPoint) -> GeoPoint:
    """Spherical Web Mercator meters -> WGS84."""
    lon = math.degrees(q.x / MERCATOR_RADIUS_M)
    lat = math.degrees(2.0 * math.atan(math.exp(q.y / MERCATOR_RADIUS_M)) - math.pi / 2.0)
    return GeoPoint(lat, lon)


def tile_centered_at(
    center: GeoPoint, size_m: float = 300.0, px: int = 500, resolution_m_per_px: float = 0.6
) -> TileSpec:
    """Tile whose projected footprint is centered on `center`."""
    c = project(center)
    half = size_m / 2.0
    return TileSpec(ProjectedPoint(c.x - half, c.y - half), size_m, px, resolution_m_per_px)


def pixel_to_geo(tile: TileSpec, px: int, py: int) -> GeoPoint:
    """Geographic location of pixel center (px = column, py = row from top)."""
    if not (0 <= px < tile.px and 0 <= py < tile.px):
        raise ValueError(f"pixel ({px}, {py}) outside tile grid of {tile.px} px")
    res = tile.resolution_m_per_px
    x = tile.min_corner.x + (px + 0.5) * res
    y = tile.min_corner.y + tile.size_m - (py + 0.5) * res
    return unproject(ProjectedPoint(x, y))


def buffers_overlap(a: GeoPoint, b: GeoPoint, r: float) -> bool:
    """True iff discs of radius r around a and b intersect (strict).

    Strictness makes a 300 m separation exactly the non-overlap boundary
    for 150 m buffers.
    """
    if r <= 0:
        raise ValueError(f"buffer radius must be positive, got {r}")
    return haversine_distance(a, b) < 2.0 * r


class UnionFind:
    """Disjoint sets with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int):
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return
        if self.size[ri] < self.size[rj]:
            ri, rj = rj, ri
        self.parent[rj] = ri
        self.size[ri] += self.size[rj]


def _bin_indices(p: GeoPoint, dlat: float, dlon: float, nlon: int) -> tuple[int, int]:
    return int(math.floor((p.lat + 90.0) / dlat)), int(math.floor((p.lon + 180.0) / dlon)) % nlon


def overlap_components(points: Sequence[GeoPoint], radius: float) -> list[int]:
    """Connected components of the buffer-overlap graph.

    Edge between two points iff buffers_overlap(., ., radius).  Returns a
    component id per point (ids are the smallest member index of each
    component).  Uses lat/lon binning so only nearby pairs are tested with
    the exact haversine predicate; output is independent of point order.
    """
    n = len(points)
    uf = UnionFind(n)
    if n > 1:
        threshold = 2.0 * radius
        # degrees per bin, sized so any pair closer than the threshold falls
        # in the same or an adjacent bin (lon bins widen toward the poles)
        dlat = max(1e-9, threshold / 110_574.0) * 1.001
        max_abs_lat = min(89.0, max(abs(p.lat) for p in points))
        coslat = max(0.02, math.cos(math.radians(max_abs_lat)))
        dlon = max(1e-9, threshold / (111_320.0 * coslat)) * 1.001
        dlon = min(dlon, 120.0)
        nlon = max(3, int(math.ceil(360.0 / dlon)))
        dlon = 360.0 / nlon
        bins: dict[tuple[int, int], list[int]] = {}
        for i, p in enumerate(points):
            bins.setdefault(_bin_indices(p, dlat, dlon, nlon), []).append(i)
        for (bi, bj), members in bins.items():
            for di in (0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj < 0:
                        continue  # each unordered bin pair visited once
                    other = (bi + di, (bj + dj) % nlon)
                    if other == (bi, bj):
                        for a in range(len(members)):
                            for b in range(a + 1, len(members)):
                                i, j = members[a], members[b]
                                if haversine_distance(points[i], points[j]) < threshold:
                                    uf.union(i, j)
                    elif other in bins:
                        for i in members:
                            for j in bins[other]:
                                if haversine_distance(points[i], points[j]) < threshold:
                                    uf.union(i, j)
    roots = [uf.find(i) for i in range(n)]
    label: dict[int, int] = {}
    for i, r in enumerate(roots):
        label.setdefault(r, i)
    return [label[r] for r in roots]


def violating_pairs(points: Sequence[GeoPoint], min_distance: float) -> list[tuple[int, int, float]]:
    """All index pairs closer than `min_distance` meters (ascending indices)."""
    comps = overlap_components(points, min_distance / 2.0)
    by_comp: dict[int, list[int]] = {}
    for i, c in enumerate(comps):
        by_comp.setdefault(c, []).append(i)
    out = []
    for members in by_comp.values():
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                i, j = members[a], members[b]
                d = haversine_distance(points[i], points[j])
                if d < min_distance:
                    out.append((i, j, d))
    out.sort()
    return out
