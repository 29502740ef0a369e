import math

import numpy as np
import pytest

from schoolsweep.cam import Cam, DegenerateCamError
from schoolsweep.roadeval import (
    PerturbationConfig,
    canny_edges,
    confidence_drop,
    degenerate_check,
    evaluate_methods,
    morf_mask,
    noisy_linear_impute,
)

CONFIG = PerturbationConfig()


def cam_of(values):
    return Cam(np.asarray(values, float), "gradcam", False)


class TestMorfMask:
    @pytest.mark.parametrize("h,w,q", [(10, 10, 0.1), (7, 9, 0.13), (16, 16, 0.25), (5, 5, 0.5)])
    def test_exact_count(self, h, w, q):
        rng = np.random.default_rng(0)
        mask = morf_mask(cam_of(rng.random((h, w))), q)
        assert mask.sum() == math.ceil(q * h * w)

    def test_descending_raster_cam_selects_prefix(self):
        values = np.linspace(1.0, 0.0, 100).reshape(10, 10)
        mask = morf_mask(cam_of(values), 0.1)
        expected = np.zeros(100, bool)
        expected[:10] = True
        np.testing.assert_array_equal(mask.ravel(), expected)

    def test_tie_break_row_major(self):
        values = np.full((4, 4), 0.5)
        values[2, 2] = 1.0
        mask = morf_mask(cam_of(values), 3 / 16)
        # peak first, then the two smallest row-major tied pixels
        assert mask[2, 2] and mask[0, 0] and mask[0, 1] and mask.sum() == 3

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateCamError):
            morf_mask(Cam(np.zeros((4, 4)), "gradcam", True), 0.1)


def dense_impute_oracle(image, mask, sigma, seed):
    """Literal dense assembly of the imputation equations, solved directly."""
    c, h, w = image.shape
    masked = np.argwhere(mask)
    index = {(r, cc): i for i, (r, cc) in enumerate(map(tuple, masked))}
    n = len(masked)
    neighbors = [(-1, 0, 1 / 6), (1, 0, 1 / 6), (0, -1, 1 / 6), (0, 1, 1 / 6),
                 (-1, -1, 1 / 12), (-1, 1, 1 / 12), (1, -1, 1 / 12), (1, 1, 1 / 12)]
    rng = np.random.default_rng(seed)
    out = image.astype(float).copy()
    for ch in range(c):
        a = np.eye(n)
        b = np.zeros(n)
        for i, (r, cc) in enumerate(map(tuple, masked)):
            inb = [(r + dr, cc + dc, wt) for dr, dc, wt in neighbors
                   if 0 <= r + dr < h and 0 <= cc + dc < w]
            total = sum(wt for _, _, wt in inb)
            for rr, ccc, wt in inb:
                wn = wt / total
                if (rr, ccc) in index:
                    a[i, index[(rr, ccc)]] -= wn
                else:
                    b[i] += wn * out[ch, rr, ccc]
        if sigma > 0:
            b += rng.normal(0, sigma, n)
        sol = np.linalg.solve(a, b)
        for i, (r, cc) in enumerate(map(tuple, masked)):
            out[ch, r, cc] = sol[i]
    return out


class TestNoisyLinearImpute:
    def test_empty_mask_unchanged(self):
        rng = np.random.default_rng(1)
        image = rng.random((3, 8, 8))
        out = noisy_linear_impute(image, np.zeros((8, 8), bool), 0.01, 0)
        np.testing.assert_array_equal(out, image)

    def test_single_pixel_weighted_mean(self):
        image = np.full((1, 5, 5), 10.0)
        image[0, 2, 2] = -99.0  # value is irrelevant, it gets replaced
        mask = np.zeros((5, 5), bool)
        mask[2, 2] = True
        out = noisy_linear_impute(image, mask, 0.0, 0)
        assert out[0, 2, 2] == pytest.approx(10.0, abs=1e-6)

    def test_constant_image_restored(self):
        image = np.full((2, 10, 10), 0.42)
        mask = np.zeros((10, 10), bool)
        mask[3:7, 3:8] = True
        out = noisy_linear_impute(image, mask, 0.0, 0)
        np.testing.assert_allclose(out, 0.42, atol=1e-6)

    def test_unmasked_pixels_untouched(self):
        rng = np.random.default_rng(2)
        image = rng.random((3, 12, 12))
        mask = rng.random((12, 12)) < 0.2
        out = noisy_linear_impute(image, mask, 0.05, 7)
        np.testing.assert_array_equal(out[:, ~mask], image[:, ~mask])

    def test_idempotent_at_zero_noise(self):
        rng = np.random.default_rng(3)
        image = rng.random((2, 10, 10))
        mask = rng.random((10, 10)) < 0.15
        once = noisy_linear_impute(image, mask, 0.0, 0)
        twice = noisy_linear_impute(once, mask, 0.0, 0)
        assert np.abs(twice - once).max() <= 1e-6

    def test_maximum_principle(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            image = rng.random((1, 9, 9))
            mask = rng.random((9, 9)) < 0.2
            if not mask.any():
                continue
            out = noisy_linear_impute(image, mask, 0.0, 0)
            lo, hi = image[0, ~mask].min(), image[0, ~mask].max()
            assert out[0, mask].min() >= lo - 1e-9
            assert out[0, mask].max() <= hi + 1e-9

    @pytest.mark.parametrize("sigma", [0.0, 0.02])
    def test_matches_dense_oracle(self, sigma):
        rng = np.random.default_rng(5)
        for trial in range(10):
            image = rng.random((2, 12, 12))
            mask = rng.random((12, 12)) < 0.25
            if not mask.any():
                continue
            sparse_out = noisy_linear_impute(image, mask, sigma, seed=trial)
            dense_out = dense_impute_oracle(image, mask, sigma, seed=trial)
            assert np.abs(sparse_out - dense_out).max() <= 1e-6

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(6)
        image = rng.random((3, 8, 8))
        mask = rng.random((8, 8)) < 0.3
        a = noisy_linear_impute(image, mask, 0.05, seed=9)
        b = noisy_linear_impute(image, mask, 0.05, seed=9)
        np.testing.assert_array_equal(a, b)


class TestCannyGuard:
    def test_uniform_image_degenerate(self):
        assert degenerate_check(np.full((3, 32, 32), 0.5), CONFIG)

    @pytest.mark.parametrize("w", [16, 32, 64])
    def test_half_split_not_degenerate(self, w):
        image = np.zeros((3, w, w))
        image[:, :, w // 2 :] = 1.0
        assert not degenerate_check(image, CONFIG)
        # edge fraction stays near one column's worth of pixels
        edges = canny_edges(image.mean(axis=0), CONFIG)
        assert 1.0 / w <= edges.mean() <= 4.0 / w

    def test_checkerboard_not_degenerate(self):
        tile = np.kron([[0.0, 1.0], [1.0, 0.0]], np.ones((8, 8)))
        image = np.tile(tile, (4, 4))[None].repeat(3, axis=0)
        assert not degenerate_check(image, CONFIG)


class FixedScoreBackend:
    """Scores images by mean brightness: bright pixels carry the evidence."""

    def school_scores(self, images):
        return np.clip(images.mean(axis=(1, 2, 3)) * 2.0, 0.0, 1.0)


class TestConfidenceDrop:
    def test_drop_is_score_difference(self):
        class TwoScores:
            def school_scores(self, images):
                return np.array([0.9, 0.3])

        rng = np.random.default_rng(7)
        image = rng.random((3, 16, 16))
        cam = cam_of(rng.random((16, 16)))
        row = confidence_drop(TwoScores(), image, cam, CONFIG)
        assert row["drop"] == pytest.approx(0.6)

    def test_cam_degenerate_forces_zero(self):
        class Never:
            def school_scores(self, images):
                raise AssertionError("must not score degenerate-cam images")

        row = confidence_drop(
            Never(), np.zeros((3, 8, 8)), Cam(np.zeros((8, 8)), "gradcam", True), CONFIG
        )
        assert row == {"drop": 0.0, "cam_degenerate": True, "canny_degenerate": False}

    def test_canny_degenerate_forces_zero(self):
        class Never:
            def school_scores(self, images):
                raise AssertionError("must not score washed-out images")

        # uniform image stays uniform after noiseless imputation -> guard
        # fires (with noise the relative Canny thresholds see the noise
        # itself as structure, so sigma = 0 isolates the guard)
        image = np.full((3, 16, 16), 0.5)
        cam = cam_of(np.random.default_rng(8).random((16, 16)))
        config = PerturbationConfig(noise_std=0.0)
        row = confidence_drop(Never(), image, cam, config)
        assert row["drop"] == 0.0 and row["canny_degenerate"]

    def test_removing_bright_evidence_drops_score(self):
        image = np.full((3, 16, 16), 0.2)
        image[:, 6:10, 6:10] = 1.0
        cam_values = np.zeros((16, 16))
        cam_values[6:10, 6:10] = 1.0
        cam_values[0, 0] = 1e-6  # non-constant
        row = confidence_drop(FixedScoreBackend(), image, cam_of(cam_values), CONFIG)
        assert row["drop"] > 0.05


class BundleBackend:
    """Backend producing fixed bundles keyed by image index."""

    def __init__(self, bundles, scores):
        self._bundles = bundles
        self._scores = scores
        self._cursor = 0

    def bundles(self, images):
        return self._bundles

    def school_scores(self, images):
        return self._scores(images)


class TestEvaluateMethods:
    def test_single_image_single_method(self):
        from schoolsweep.model.net import FeatureBundle

        rng = np.random.default_rng(9)
        image = np.full((3, 16, 16), 0.2)
        image[:, 4:12, 4:12] = rng.random((3, 8, 8))
        bundle = FeatureBundle(
            np.array([0.0, 1.0]),
            np.array([0.3, 0.7]),
            rng.random((2, 4, 4)),
            rng.random((2, 4, 4)),
        )
        backend = BundleBackend([bundle], FixedScoreBackend().school_scores)
        report = evaluate_methods(np.stack([image]), ["img0"], backend, ["gradcam"], CONFIG)
        assert len(report.rows) == 1
        assert report.method_means["gradcam"] == pytest.approx(report.rows[0]["drop"])

    def test_degenerate_method_means_zero(self):
        from schoolsweep.model.net import FeatureBundle

        rng = np.random.default_rng(10)
        bundles = [
            FeatureBundle(
                np.zeros(2), np.array([0.5, 0.5]),
                rng.random((2, 4, 4)), -np.abs(rng.random((2, 4, 4))),
            )
            for _ in range(3)
        ]
        images = rng.random((3, 3, 16, 16))
        backend = BundleBackend(bundles, FixedScoreBackend().school_scores)
        report = evaluate_methods(images, ["a", "b", "c"], backend, ["gradcam"], CONFIG)
        assert report.method_means["gradcam"] == 0.0
        assert all(r["cam_degenerate"] for r in report.rows)

    def test_table_rendering(self):
        from schoolsweep.roadeval import ConfidenceDropReport

        table = ConfidenceDropReport({"gradcam": 0.5, "eigencam": 0.1}).as_table()
        assert "gradcam" in table and "eigencam" in table
        assert table.splitlines()[1].startswith("gradcam")
