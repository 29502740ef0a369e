"""Precision-recall metrics, threshold optimization, and disaggregation.

The decision rule is strict: a tile is predicted positive at threshold t
iff its score > t.  AUPRC is average precision (no interpolation), so a
brute-force threshold enumeration reproduces it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SingleClassError(ValueError):
    """Both classes are required to compute a PR curve."""


@dataclass
class PrCurve:
    thresholds: np.ndarray  # descending unique scores
    precision: np.ndarray
    recall: np.ndarray
    auprc: float


@dataclass
class ThresholdSweep:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    fbeta: np.ndarray
    best_threshold: float
    best_fbeta: float
    best_precision: float
    best_recall: float


def _validate_two_class(labels: np.ndarray):
    if labels.sum() == 0 or labels.sum() == len(labels):
        raise SingleClassError("need at least one positive and one negative label")


def pr_curve(scores, labels) -> PrCurve:
    """Stepwise PR curve over descending unique scores; ties share a threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1 or len(scores) == 0:
        raise ValueError("scores and labels must be equal-length 1-d arrays")
    _validate_two_class(labels)
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    unique_mask = np.concatenate([np.diff(s) != 0, [True]])  # last index of each tie group
    tp = np.cumsum(y)[unique_mask].astype(np.float64)
    fp = np.cumsum(1 - y)[unique_mask].astype(np.float64)
    thresholds = s[unique_mask]
    n_pos = labels.sum()
    precision = tp / (tp + fp)
    recall = tp / n_pos
    auprc = float(np.sum(np.diff(np.concatenate([[0.0], recall])) * precision))
    return PrCurve(thresholds, precision, recall, auprc)


def fbeta(precision: float, recall: float, beta: float = 2.0) -> float:
    """F-beta; defined as 0 when precision = recall = 0."""
    if not (0.0 <= precision <= 1.0 and 0.0 <= recall <= 1.0):
        raise ValueError(f"precision/recall must be in [0, 1], got {precision}, {recall}")
    if precision == 0.0 and recall == 0.0:
        return 0.0
    b2 = beta * beta
    return (1.0 + b2) * precision * recall / (b2 * precision + recall)


def optimize_threshold(scores, labels, beta: float = 2.0) -> ThresholdSweep:
    """Best F-beta threshold for the strict `score > t` rule.

    Sweeps the midpoints between consecutive unique scores plus one
    threshold below the minimum score (so predicting everything positive
    is always a candidate); ties go to the smallest threshold, which
    favors recall.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _validate_two_class(labels)
    uniq = np.unique(scores)
    candidates = [uniq[0] - 1.0]
    candidates.extend((uniq[:-1] + uniq[1:]) / 2.0)
    candidates = np.asarray(candidates)
    n_pos = labels.sum()
    precision = np.empty(len(candidates))
    recall = np.empty(len(candidates))
    scores_f = np.empty(len(candidates))
    for i, t in enumerate(candidates):
        predicted = scores > t
        tp = int((predicted & (labels == 1)).sum())
        fp = int((predicted & (labels == 0)).sum())
        precision[i] = tp / (tp + fp) if tp + fp else 0.0
        recall[i] = tp / n_pos
        scores_f[i] = fbeta(precision[i], recall[i], beta)
    best = int(np.argmax(scores_f))  # argmax takes the first (smallest) threshold on ties
    return ThresholdSweep(
        candidates,
        precision,
        recall,
        scores_f,
        float(candidates[best]),
        float(scores_f[best]),
        float(precision[best]),
        float(recall[best]),
    )


def disaggregate(scores, labels, strata) -> dict[str, float | None]:
    """Per-stratum AUPRC; strata missing a class map to None (undefined)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    strata = np.asarray(strata)
    out: dict[str, float | None] = {}
    for stratum in sorted(set(strata.tolist())):
        sel = strata == stratum
        try:
            out[str(stratum)] = pr_curve(scores[sel], labels[sel]).auprc
        except SingleClassError:
            out[str(stratum)] = None
    return out


def generalization_matrix(
    cells: dict[str, dict[str, tuple[np.ndarray, np.ndarray]]],
) -> dict[str, dict[str, float | None]]:
    """AUPRC per (model, test set); missing scorer entries stay None.

    cells[model_id][test_id] = (scores, labels).
    """
    model_ids = sorted(cells)
    test_ids = sorted({t for row in cells.values() for t in row})
    matrix: dict[str, dict[str, float | None]] = {}
    for m in model_ids:
        matrix[m] = {}
        for t in test_ids:
            if t in cells[m]:
                scores, labels = cells[m][t]
                matrix[m][t] = pr_curve(scores, labels).auprc
            else:
                matrix[m][t] = None
    return matrix


def matrix_to_csv(matrix: dict[str, dict[str, float | None]]) -> str:
    test_ids = sorted({t for row in matrix.values() for t in row})
    lines = ["model," + ",".join(test_ids)]
    for m in sorted(matrix):
        cells = [("" if matrix[m][t] is None else f"{matrix[m][t]:.6f}") for t in test_ids]
        lines.append(m + "," + ",".join(cells))
    return "\n".join(lines) + "\n"


def threshold_table(rows: dict[str, ThresholdSweep]) -> str:
    """Per-country optimal-threshold summary table."""
    lines = [f"{'country':<10}{'F2':>8}{'recall':>8}{'precision':>11}{'tau*':>8}"]
    for country, sweep in sorted(rows.items()):
        lines.append(
            f"{country:<10}{sweep.best_fbeta:>8.3f}{sweep.best_recall:>8.3f}"
            f"{sweep.best_precision:>11.3f}{sweep.best_threshold:>8.3f}"
        )
    return "\n".join(lines)
