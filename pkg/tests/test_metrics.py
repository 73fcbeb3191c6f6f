"""Metric oracles: closed forms, reference cross-checks, report plumbing."""

import math

import numpy as np
import pytest
import torch

from demoire.backbones import RandomVideoEmbedder, load_feature_extractor
from demoire.errors import ConfigurationError, InvalidInputError, ShapeError
from demoire.fsim import fsim
from demoire.metrics import (
    MetricsReport,
    color_histogram_correlation,
    fvd,
    lpips,
    psnr,
    ssim,
    y_psnr,
)


class TestPsnr:
    def test_identical_images_infinite(self):
        x = np.random.default_rng(0).random((3, 16, 16))
        assert psnr(x, x.copy()) == float("inf")

    def test_uniform_error_closed_form(self):
        # Every pixel off by 16/255 at peak 1: MSE = (16/255)^2, so the score
        # is 20*log10(255/16).
        a = np.full((3, 32, 32), 0.5)
        b = a + 16.0 / 255.0
        expected = 20.0 * math.log10(255.0 / 16.0)
        assert abs(psnr(a, b) - expected) < 1e-10

    def test_matches_brute_force_mse(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            a = rng.random((3, 8, 8))
            b = rng.random((3, 8, 8))
            mse = float(np.mean((a - b) ** 2))
            assert abs(psnr(a, b) - 10.0 * math.log10(1.0 / mse)) < 1e-10

    def test_strictly_decreases_with_noise(self):
        rng = np.random.default_rng(2)
        base = rng.random((3, 32, 32)) * 0.5 + 0.25
        scores = []
        for sigma in (0.01, 0.05, 0.1):
            noisy = base + rng.normal(0, sigma, base.shape)
            scores.append(psnr(base, noisy))
        assert scores[0] > scores[1] > scores[2]

    def test_peak_parameter(self):
        a = np.zeros((4, 4))
        b = np.full((4, 4), 16.0)
        assert abs(psnr(a, b, peak=255.0) - 20.0 * math.log10(255.0 / 16.0)) < 1e-10

    def test_accepts_torch_tensors(self):
        x = torch.rand(3, 8, 8)
        y = torch.rand(3, 8, 8)
        assert abs(psnr(x, y) - psnr(x.numpy(), y.numpy())) < 1e-10

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros((3, 8, 8)), np.zeros((3, 8, 9)))

    def test_rejects_bad_peak(self):
        with pytest.raises(ConfigurationError):
            psnr(np.zeros((4, 4)), np.ones((4, 4)), peak=0.0)


class TestYPsnr:
    def test_identical_images_infinite(self):
        x = np.random.default_rng(3).random((3, 8, 8))
        assert y_psnr(x, x.copy()) == float("inf")

    def test_equal_luma_chroma_difference_scores_at_machine_precision(self):
        # Perturb along a direction orthogonal to the BT.601 weights so the
        # Y plane changes only by floating-point rounding: the luma score
        # sits at the rounding floor (> 300 dB) while the RGB score reflects
        # the real chroma difference.
        rng = np.random.default_rng(4)
        a = rng.random((3, 8, 8)) * 0.5 + 0.25
        delta = np.zeros_like(a)
        delta[0] = 0.587 * 0.05
        delta[1] = -0.299 * 0.05
        b = a + delta
        assert y_psnr(a, b) > 300.0
        assert psnr(a, b) < 40.0

    def test_matches_psnr_of_y_planes(self):
        rng = np.random.default_rng(5)
        a = rng.random((3, 8, 8))
        b = rng.random((3, 8, 8))
        w = np.array([0.299, 0.587, 0.114]).reshape(3, 1, 1)
        ya = (a * w).sum(axis=0)
        yb = (b * w).sum(axis=0)
        assert abs(y_psnr(a, b) - psnr(ya, yb)) < 1e-10

    def test_rejects_non_rgb(self):
        with pytest.raises(ShapeError):
            y_psnr(np.zeros((1, 8, 8)), np.zeros((1, 8, 8)))


class TestSsim:
    def test_identity_is_one(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            x = rng.random((3, 24, 24))
            assert abs(ssim(x, x.copy()) - 1.0) < 1e-6

    def test_equal_constants_are_one(self):
        a = np.full((16, 16), 0.5)
        assert abs(ssim(a, a.copy()) - 1.0) < 1e-6

    def test_inverted_pattern_scores_low(self):
        rng = np.random.default_rng(7)
        a = rng.random((32, 32)) * 0.6 + 0.2
        assert ssim(a, 1.0 - a) < 0.5

    def test_matches_reference_implementation(self):
        skimage = pytest.importorskip("skimage.metrics")
        rng = np.random.default_rng(8)
        a = rng.random((48, 48))
        b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
        ref = skimage.structural_similarity(
            a,
            b,
            data_range=1.0,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
        )
        # Implementations disagree slightly at the border (this one crops a
        # 5 px frame, the reference filters to the edge), hence the loose bar.
        assert abs(ssim(a, b) - ref) < 5e-3

    def test_decreases_with_noise(self):
        rng = np.random.default_rng(9)
        a = rng.random((32, 32)) * 0.5 + 0.25
        s1 = ssim(a, np.clip(a + rng.normal(0, 0.02, a.shape), 0, 1))
        s2 = ssim(a, np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1))
        assert s1 > s2

    def test_rejects_images_smaller_than_window(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestFsim:
    def test_identity_is_one(self):
        rng = np.random.default_rng(10)
        for _ in range(3):
            x = rng.random((3, 48, 48))
            assert abs(fsim(x, x.copy()) - 1.0) < 1e-6

    def test_bounded_unit_interval(self):
        rng = np.random.default_rng(11)
        a = rng.random((3, 48, 48))
        b = rng.random((3, 48, 48))
        s = fsim(a, b)
        assert 0.0 <= s <= 1.0

    def test_blur_monotonicity(self):
        from scipy.ndimage import gaussian_filter

        rng = np.random.default_rng(12)
        a = rng.random((64, 64))
        scores = [
            fsim(a, gaussian_filter(a, sigma=s, mode="nearest")) for s in (1.0, 3.0)
        ]
        assert scores[0] < 1.0
        assert scores[0] > scores[1]

    def test_tiny_noise_continuity(self):
        rng = np.random.default_rng(13)
        a = rng.random((64, 64)) * 0.8 + 0.1
        b = a + rng.normal(0, 1e-4, a.shape)
        assert fsim(a, b) >= 0.999

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ShapeError):
            fsim(np.zeros((16, 16)), np.zeros((16, 17)))


@pytest.fixture(scope="module")
def backbone():
    return load_feature_extractor(None, seed=0)


class TestLpips:
    def test_identity_is_zero(self, backbone):
        torch.manual_seed(14)
        x = torch.rand(1, 3, 32, 32)
        assert lpips(x, x.clone(), backbone) < 1e-8

    def test_symmetric(self, backbone):
        torch.manual_seed(15)
        a = torch.rand(1, 3, 32, 32)
        b = torch.rand(1, 3, 32, 32)
        assert abs(lpips(a, b, backbone) - lpips(b, a, backbone)) < 1e-7

    def test_matches_reference_formula(self, backbone):
        torch.manual_seed(16)
        a = torch.rand(1, 3, 32, 32)
        b = torch.rand(1, 3, 32, 32)
        with torch.no_grad():
            taps_a = backbone(a)
            taps_b = backbone(b)
        expected = 0.0
        for fa, fb in zip(taps_a, taps_b):
            fa, fb = fa.numpy(), fb.numpy()
            na = fa / np.sqrt((fa**2).sum(axis=1, keepdims=True) + 1e-10)
            nb = fb / np.sqrt((fb**2).sum(axis=1, keepdims=True) + 1e-10)
            expected += float(((na - nb) ** 2).mean())
        assert abs(lpips(a, b, backbone) - expected) < 1e-6

    def test_positive_for_distinct_images(self, backbone):
        torch.manual_seed(17)
        a = torch.rand(1, 3, 32, 32)
        b = torch.rand(1, 3, 32, 32)
        assert lpips(a, b, backbone) > 0


class TestFvd:
    def test_identical_sets_zero(self):
        rng = np.random.default_rng(18)
        a = rng.normal(size=(16, 4))
        assert fvd(a, a.copy()) < 1e-6

    def test_mean_shift_closed_form(self):
        # Same sample covariance, means d apart: distance is exactly d^2.
        base = np.array([[-1.0], [0.0], [1.0]])
        for d in (0.5, 2.0, 7.5):
            got = fvd(base, base + d)
            assert abs(got - d * d) / (d * d) < 1e-4

    def test_variance_difference_closed_form(self):
        # 1-D zero-mean sets with sample stds s1, s2: distance is (s1-s2)^2.
        for s1, s2 in [(1.0, 2.0), (0.5, 3.0)]:
            a = np.array([[-s1], [0.0], [s1]])
            b = np.array([[-s2], [0.0], [s2]])
            got = fvd(a, b)
            expected = (s1 - s2) ** 2
            assert abs(got - expected) / expected < 1e-4

    def test_symmetric(self):
        rng = np.random.default_rng(19)
        a = rng.normal(size=(8, 3))
        b = rng.normal(size=(10, 3))
        assert abs(fvd(a, b) - fvd(b, a)) < 1e-8

    def test_rejects_single_sample(self):
        with pytest.raises(InvalidInputError):
            fvd(np.zeros((1, 4)), np.zeros((4, 4)))

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            fvd(np.zeros((4, 3)), np.zeros((4, 5)))


class TestHistogramCorrelation:
    def test_identity_is_one(self):
        rng = np.random.default_rng(20)
        x = rng.random((3, 32, 32))
        assert abs(color_histogram_correlation(x, x.copy()) - 1.0) < 1e-10

    def test_channel_permutation_below_one(self):
        rng = np.random.default_rng(21)
        a = np.stack(
            [
                rng.random((32, 32)) * 0.3,
                rng.random((32, 32)) * 0.3 + 0.35,
                rng.random((32, 32)) * 0.3 + 0.7,
            ]
        )
        b = a[[1, 2, 0]]
        assert color_histogram_correlation(a, b) < 1.0

    def test_independent_noise_near_zero(self):
        rng = np.random.default_rng(22)
        a = rng.random((3, 128, 128))
        b = rng.random((3, 128, 128))
        assert abs(color_histogram_correlation(a, b)) < 0.1

    def test_flat_histograms_degenerate_to_zero(self):
        # One sample in every bin: the histogram has zero variance, so the
        # correlation is undefined and pinned to 0.
        a = (np.arange(256, dtype=np.float64) / 256.0 + 1.0 / 512.0).reshape(1, 16, 16)
        a = np.repeat(a, 3, axis=0)
        assert color_histogram_correlation(a, a.copy()) == 0.0

    def test_constant_images_have_delta_histograms(self):
        # A constant image concentrates all mass in one bin; that histogram
        # has plenty of variance, so identical constants still score 1.
        a = np.full((3, 8, 8), 0.5)
        assert color_histogram_correlation(a, a.copy()) == 1.0

    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidInputError):
            color_histogram_correlation(np.full((3, 4, 4), 1.5), np.zeros((3, 4, 4)))


class TestVideoEmbedder:
    def test_fixed_dim_and_determinism(self):
        emb = RandomVideoEmbedder(dim=128, seed=0)
        torch.manual_seed(23)
        clip = torch.rand(5, 3, 32, 32)
        v1 = emb(clip)
        v2 = emb(clip)
        assert v1.shape == (128,)
        assert (v1 - v2).abs().max().item() == 0.0

    def test_sensitive_to_temporal_order(self):
        emb = RandomVideoEmbedder(dim=128, seed=0)
        torch.manual_seed(24)
        clip = torch.rand(5, 3, 32, 32)
        shuffled = clip[[4, 2, 0, 3, 1]]
        assert (emb(clip) - emb(shuffled)).abs().max().item() > 0


class TestMetricsReport:
    def test_aggregate_means_and_stds(self):
        r = MetricsReport()
        r.add_frame(sequence="a", index=0, psnr=20.0, ssim=0.8)
        r.add_frame(sequence="a", index=1, psnr=30.0, ssim=0.6)
        agg = r.aggregate()
        assert agg["psnr"] == (25.0, 5.0)
        assert abs(agg["ssim"][0] - 0.7) < 1e-12
        assert set(agg) == {"psnr", "ssim"}

    def test_metadata_keys_excluded(self):
        r = MetricsReport()
        r.add_frame(sequence="s", index=3, psnr=10.0)
        assert "index" not in r.aggregate()
        assert "sequence" not in r.aggregate()

    def test_comparability_label(self):
        assert "pretrained" in MetricsReport(comparable=True).comparability_label()
        fallback = MetricsReport(comparable=False).comparability_label()
        assert "non-comparable" in fallback
