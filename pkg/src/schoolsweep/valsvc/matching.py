"""Greedy one-to-one matching between predictions and government points.

Candidate pairs (distance <= d) are sorted ascending by (distance,
prediction id, government id); a pair is accepted iff both sides are still
unmatched.  This yields a single matched count that closes both totals:
|pairs| + |unmatched_gov| = |government| and |pairs| + |unmatched_pred| =
|filtered predictions|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geo import GeoPoint


@dataclass(frozen=True)
class MatchConfig:
    tau: float = 0.0
    d: float = 250.0

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError(f"distance threshold must be positive, got {self.d}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"probability threshold must be in [0, 1], got {self.tau}")


@dataclass(frozen=True)
class MatchPair:
    prediction_id: str
    government_id: str
    distance_m: float


@dataclass
class MatchResult:
    pairs: list[MatchPair]
    unmatched_predictions: list[str]
    unmatched_government: list[str]

    def venn(self) -> dict:
        return venn_stats(len(self.pairs), len(self.unmatched_government), len(self.unmatched_predictions))


def venn_stats(matched: int, unmatched_government: int, unmatched_predictions: int) -> dict:
    """Venn accounting; both totals decompose through the same matched count."""
    return {
        "matched": matched,
        "unmatched_government": unmatched_government,
        "unmatched_predictions": unmatched_predictions,
        "government_total": matched + unmatched_government,
        "predictions_total": matched + unmatched_predictions,
    }


def _cross_distances(a_lat, a_lon, b_lat, b_lon) -> np.ndarray:
    phi1 = np.radians(a_lat)[:, None]
    phi2 = np.radians(b_lat)[None, :]
    dphi = phi2 - phi1
    dlam = np.radians(b_lon)[None, :] - np.radians(a_lon)[:, None]
    h = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * 6_371_000.0 * np.arcsin(np.sqrt(np.minimum(1.0, h)))


def match(
    predictions: list[tuple[str, GeoPoint, float]],
    government: list[tuple[str, GeoPoint]],
    config: MatchConfig = MatchConfig(),
) -> MatchResult:
    """One-to-one matching of predictions (filtered to probability > tau)
    against government points within distance d."""
    filtered = [(pid, loc) for pid, loc, prob in predictions if prob > config.tau]
    if not filtered or not government:
        return MatchResult([], [pid for pid, _ in filtered], [gid for gid, _ in government])
    p_lat = np.array([loc.lat for _, loc in filtered])
    p_lon = np.array([loc.lon for _, loc in filtered])
    g_lat = np.array([loc.lat for _, loc in government])
    g_lon = np.array([loc.lon for _, loc in government])
    distances = _cross_distances(p_lat, p_lon, g_lat, g_lon)
    candidate_idx = np.argwhere(distances <= config.d)
    candidates = sorted(
        (float(distances[i, j]), filtered[i][0], government[j][0], int(i), int(j))
        for i, j in candidate_idx
    )
    used_pred: set[int] = set()
    used_gov: set[int] = set()
    pairs: list[MatchPair] = []
    for distance, pid, gid, i, j in candidates:
        if i in used_pred or j in used_gov:
            continue
        used_pred.add(i)
        used_gov.add(j)
        pairs.append(MatchPair(pid, gid, distance))
    unmatched_pred = [pid for k, (pid, _) in enumerate(filtered) if k not in used_pred]
    unmatched_gov = [gid for k, (gid, _) in enumerate(government) if k not in used_gov]
    return MatchResult(pairs, unmatched_pred, unmatched_gov)
