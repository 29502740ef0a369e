"""Urban/rural stratification from a degree-of-urbanization raster and
reproducible stratified train/val/test splits.

Strata are class x urban/rural; within each stratum the split counts follow
largest-remainder apportionment of the requested fractions, so every count
is within one record of exact.  Because each record owns a non-overlapping
tile (ingest guarantees >= 300 m spacing), splitting points is equivalent
to splitting tiles.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .geo import GeoPoint, project, violating_pairs
from .ingest import PoiRecord, RasterGrid

# Degree-of-urbanization L2 codes: 30 urban centre, 23 dense urban,
# 22 semi-dense urban, 21 suburban/peri-urban; 13 rural cluster,
# 12 low density, 11 very low density; 10 and below (water) count as rural.
URBAN_CODES = frozenset({30, 23, 22, 21})
RURAL_CODES = frozenset({13, 12, 11})

SPLITS = ("train", "val", "test")


class CoverageError(ValueError):
    """A point falls outside the stratification raster."""


class SpacingError(ValueError):
    def __init__(self, pairs):
        preview = ", ".join(f"({i},{j}:{d:.1f}m)" for i, j, d in pairs[:10])
        super().__init__(f"{len(pairs)} record pairs violate the 300 m spacing: {preview}")
        self.pairs = pairs


def assign_stratum(point: GeoPoint, smod: RasterGrid) -> str:
    """'urban' or 'rural' from the containing raster cell."""
    value = smod.value_at(project(point))
    if value is None:
        raise CoverageError(f"point ({point.lat}, {point.lon}) outside stratification raster")
    return "urban" if value in URBAN_CODES else "rural"


def assign_strata(records: list[PoiRecord], smod: RasterGrid) -> list[PoiRecord]:
    out = []
    for r in records:
        try:
            stratum = assign_stratum(r.location, smod)
        except CoverageError as exc:
            raise CoverageError(f"record {r.id}: {exc}") from exc
        out.append(PoiRecord(r.id, r.name, r.source, r.class_label, r.location, stratum))
    return out


def largest_remainder(n: int, fractions: tuple[float, ...]) -> list[int]:
    """Apportion n items to fractions; remainders win seats largest-first,
    ties broken by position."""
    quotas = [n * f for f in fractions]
    counts = [int(q) for q in quotas]
    remainders = [q - c for q, c in zip(quotas, counts)]
    for _ in range(n - sum(counts)):
        best = max(range(len(fractions)), key=lambda i: (remainders[i], -i))
        counts[best] += 1
        remainders[best] = -1.0
    return counts


def stratified_split(
    records: list[PoiRecord],
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    min_spacing_m: float = 300.0,
) -> dict[str, str]:
    """Record id -> train/val/test, stratified by class x urban/rural.

    Refuses datasets whose records sit closer than min_spacing_m (tile
    leakage); requires every record to carry a stratum.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    missing = [r.id for r in records if r.stratum is None]
    if missing:
        raise ValueError(f"records without stratum: {missing[:10]}")
    pairs = violating_pairs([r.location for r in records], min_spacing_m)
    if pairs:
        raise SpacingError(pairs)
    rng = np.random.default_rng(seed)
    assignment: dict[str, str] = {}
    strata: dict[tuple[str, str], list[PoiRecord]] = {}
    for r in records:
        strata.setdefault((r.class_label, r.stratum), []).append(r)
    for key in sorted(strata):
        members = sorted(strata[key], key=lambda r: r.id)
        order = rng.permutation(len(members))
        counts = largest_remainder(len(members), fractions)
        cursor = 0
        for split, count in zip(SPLITS, counts):
            for i in order[cursor : cursor + count]:
                assignment[members[i].id] = split
            cursor += count
    return assignment


def split_to_csv(assignment: dict[str, str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["id", "split"])
    for rid in sorted(assignment):
        writer.writerow([rid, assignment[rid]])
    return buf.getvalue()


def split_from_csv(text: str) -> dict[str, str]:
    reader = csv.DictReader(io.StringIO(text))
    return {row["id"]: row["split"] for row in reader}


def strata_report(records: list[PoiRecord], assignment: dict[str, str] | None = None) -> dict:
    """Class x stratum counts, optionally broken down by split."""
    report: dict = {}
    for r in records:
        klass = report.setdefault(r.class_label, {})
        cell = klass.setdefault(r.stratum or "unknown", {"total": 0})
        cell["total"] += 1
        if assignment is not None:
            split = assignment.get(r.id)
            cell[split] = cell.get(split, 0) + 1
    return report
