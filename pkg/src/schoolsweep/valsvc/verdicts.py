"""Durable verdict storage: append-only JSON-lines log with an in-memory
index.  Writes are idempotent on (prediction, validator, revision); a later
revision supersedes an earlier one for the same (prediction, validator).
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

DECISIONS = ("approved", "rejected", "relocated")


class VerdictError(ValueError):
    """Invalid verdict payload (bad decision, missing coordinates, ...)."""


class StaleRevisionError(ValueError):
    """Submitted revision is older than, or conflicts with, the stored one."""


@dataclass(frozen=True)
class Verdict:
    prediction_id: str
    decision: str
    validator_id: str
    revision: int
    timestamp: str
    corrected_lat: float | None = None
    corrected_lon: float | None = None

    def __post_init__(self):
        if self.decision not in DECISIONS:
            raise VerdictError(f"unknown decision {self.decision!r}, expected one of {DECISIONS}")
        if self.decision == "relocated" and (self.corrected_lat is None or self.corrected_lon is None):
            raise VerdictError("relocated verdicts require corrected coordinates")
        if self.revision < 1:
            raise VerdictError(f"revision must be >= 1, got {self.revision}")

    def content_key(self) -> tuple:
        return (self.decision, self.corrected_lat, self.corrected_lon)


class VerdictLog:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._by_key: dict[tuple[str, str], Verdict] = {}
        self._sequence: dict[tuple[str, str], int] = {}
        self._next_seq = 0
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    self._index(Verdict(**json.loads(line)))

    def _index(self, verdict: Verdict):
        key = (verdict.prediction_id, verdict.validator_id)
        current = self._by_key.get(key)
        if current is None or verdict.revision >= current.revision:
            self._by_key[key] = verdict
            self._sequence[key] = self._next_seq
        self._next_seq += 1

    def record(self, verdict: Verdict) -> tuple[Verdict, bool]:
        """Returns (stored verdict, appended).  Retrying the same revision
        with identical content acknowledges the stored verdict instead of
        duplicating it; an older or conflicting revision raises."""
        key = (verdict.prediction_id, verdict.validator_id)
        with self._lock:
            current = self._by_key.get(key)
            if current is not None:
                if verdict.revision < current.revision:
                    raise StaleRevisionError(
                        f"revision {verdict.revision} is older than stored {current.revision}"
                    )
                if verdict.revision == current.revision:
                    if verdict.content_key() == current.content_key():
                        return current, False
                    raise StaleRevisionError(
                        f"revision {verdict.revision} already recorded with different content"
                    )
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(asdict(verdict), sort_keys=True) + "\n")
            self._index(verdict)
            return verdict, True

    def latest_for(self, prediction_id: str) -> Verdict | None:
        """Most recent verdict across validators (by log order)."""
        best = None
        best_seq = -1
        for key, verdict in self._by_key.items():
            if key[0] == prediction_id and self._sequence[key] > best_seq:
                best, best_seq = verdict, self._sequence[key]
        return best

    def latest_by_prediction(self) -> dict[str, Verdict]:
        out: dict[str, Verdict] = {}
        seqs: dict[str, int] = {}
        for (pid, _), verdict in self._by_key.items():
            seq = self._sequence[(pid, verdict.validator_id)]
            if pid not in out or seq > seqs[pid]:
                out[pid] = verdict
                seqs[pid] = seq
        return out

    def all_verdicts(self) -> list[Verdict]:
        return [self._by_key[k] for k in sorted(self._by_key)]


def now_utc() -> str:
    return datetime.now(timezone.utc).isoformat()
