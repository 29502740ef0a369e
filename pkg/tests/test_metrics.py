import numpy as np
import pytest

from schoolsweep.metrics import (
    SingleClassError,
    threshold_table,
    disaggregate,
    fbeta,
    generalization_matrix,
    matrix_to_csv,
    optimize_threshold,
    pr_curve,
)


def brute_force_average_precision(scores, labels):
    """Oracle: enumerate descending unique scores, count TP/FP directly."""
    scores = np.asarray(scores, float)
    labels = np.asarray(labels, int)
    n_pos = labels.sum()
    ap = 0.0
    prev_recall = 0.0
    for s in sorted(set(scores.tolist()), reverse=True):
        predicted = scores >= s
        tp = int((predicted & (labels == 1)).sum())
        fp = int((predicted & (labels == 0)).sum())
        precision = tp / (tp + fp)
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def random_instance(rng, n, tie_prone=False):
    if tie_prone:
        scores = rng.integers(0, 10, size=n) / 10.0
    else:
        scores = rng.random(n)
    labels = rng.integers(0, 2, size=n)
    labels[0], labels[1] = 1, 0  # both classes present
    return scores, labels


class TestPrCurve:
    def test_perfect_separation(self):
        scores = [0.9, 0.8, 0.2, 0.1]
        labels = [1, 1, 0, 0]
        assert pr_curve(scores, labels).auprc == pytest.approx(1.0)

    def test_hand_computed_example(self):
        curve = pr_curve([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])
        assert curve.auprc == pytest.approx(0.5 * (1.0 + 2.0 / 3.0), abs=1e-12)
        np.testing.assert_allclose(curve.thresholds, [0.9, 0.8, 0.7, 0.6])
        np.testing.assert_allclose(curve.recall, [0.5, 0.5, 1.0, 1.0])

    def test_recall_nondecreasing(self):
        rng = np.random.default_rng(0)
        scores, labels = random_instance(rng, 200, tie_prone=True)
        curve = pr_curve(scores, labels)
        assert np.all(np.diff(curve.recall) >= 0)

    @pytest.mark.parametrize("tie_prone", [False, True])
    def test_matches_brute_force_oracle(self, tie_prone):
        rng = np.random.default_rng(42 if tie_prone else 43)
        for _ in range(500):
            n = int(rng.integers(3, 40))
            scores, labels = random_instance(rng, n, tie_prone)
            assert pr_curve(scores, labels).auprc == pytest.approx(
                brute_force_average_precision(scores, labels), abs=1e-9
            )

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        scores, labels = random_instance(rng, 100)
        base = pr_curve(scores, labels).auprc
        for transform in (lambda s: 2 * s + 1, np.tanh, np.exp):
            assert pr_curve(transform(scores), labels).auprc == pytest.approx(base, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(SingleClassError):
            pr_curve([0.1, 0.2], [1, 1])


class TestFbeta:
    def test_fixed_point(self):
        assert fbeta(0.9, 0.9) == pytest.approx(0.9, abs=1e-12)

    def test_reported_country_rows(self):
        assert fbeta(0.940, 0.997) == pytest.approx(0.985, abs=0.001)
        assert fbeta(0.952, 0.990) == pytest.approx(0.982, abs=0.001)
        assert fbeta(0.929, 0.968) == pytest.approx(0.960, abs=0.001)

    def test_recall_weighting_direction(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            p, r = sorted(rng.random(2))
            if r > p:
                assert fbeta(p, r, 2) > fbeta(r, p, 2)

    def test_zero_case_and_validation(self):
        assert fbeta(0.0, 0.0) == 0.0
        with pytest.raises(ValueError):
            fbeta(1.2, 0.5)


class TestOptimizeThreshold:
    def test_single_midpoint(self):
        sweep = optimize_threshold([0.8, 0.6], [1, 0])
        assert sweep.best_threshold == pytest.approx(0.7)
        assert sweep.best_fbeta == pytest.approx(1.0)

    def test_separable_returns_gap_midpoint(self):
        sweep = optimize_threshold([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert sweep.best_threshold == pytest.approx(0.5)
        assert sweep.best_fbeta == pytest.approx(1.0)

    def test_all_positives_above_gives_full_recall(self):
        scores = [0.95, 0.92, 0.91, 0.5, 0.3]
        labels = [1, 1, 1, 0, 0]
        sweep = optimize_threshold(scores, labels)
        assert sweep.best_threshold < 0.9
        assert sweep.best_recall == pytest.approx(1.0)

    def test_returned_f2_dominates_sweep(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            scores, labels = random_instance(rng, 50, tie_prone=True)
            sweep = optimize_threshold(scores, labels)
            assert sweep.best_fbeta >= sweep.fbeta.max() - 1e-12

    def test_tied_scores_still_well_defined(self):
        sweep = optimize_threshold([0.5, 0.5, 0.5], [1, 1, 0])
        assert sweep.best_threshold < 0.5
        assert sweep.best_recall == pytest.approx(1.0)


class TestDisaggregate:
    def test_identical_strata_equal(self):
        scores = [0.9, 0.1, 0.9, 0.1]
        labels = [1, 0, 1, 0]
        strata = ["urban", "urban", "rural", "rural"]
        out = disaggregate(scores, labels, strata)
        assert out["urban"] == out["rural"] == pytest.approx(1.0)

    def test_missing_class_is_undefined(self):
        out = disaggregate([0.9, 0.1, 0.8], [1, 0, 1], ["a", "a", "b"])
        assert out["b"] is None

    def test_matches_direct_curves_on_subsets(self):
        rng = np.random.default_rng(4)
        scores, labels = random_instance(rng, 120)
        strata = np.where(rng.random(120) < 0.5, "urban", "rural")
        out = disaggregate(scores, labels, strata)
        for stratum in ("urban", "rural"):
            sel = strata == stratum
            assert out[stratum] == pytest.approx(pr_curve(scores[sel], labels[sel]).auprc)


class TestGeneralizationMatrix:
    def test_single_cell(self):
        scores, labels = np.array([0.9, 0.1]), np.array([1, 0])
        m = generalization_matrix({"m1": {"t1": (scores, labels)}})
        assert m["m1"]["t1"] == pytest.approx(pr_curve(scores, labels).auprc)

    def test_missing_cell_marked_absent(self):
        scores, labels = np.array([0.9, 0.1]), np.array([1, 0])
        m = generalization_matrix({"m1": {"t1": (scores, labels)}, "m2": {}})
        assert m["m2"]["t1"] is None

    def test_csv_rendering(self):
        scores, labels = np.array([0.9, 0.1]), np.array([1, 0])
        m = generalization_matrix({"m1": {"t1": (scores, labels)}, "m2": {}})
        csv = matrix_to_csv(m)
        assert csv.splitlines()[0] == "model,t1"
        assert csv.splitlines()[2] == "m2,"


def test_threshold_table_rendering():
    sweep = optimize_threshold([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    table = threshold_table({"SEN": sweep})
    lines = table.splitlines()
    assert lines[0].startswith("country")
    assert lines[1].startswith("SEN")
    assert f"{sweep.best_threshold:.3f}" in lines[1]
