import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdikp import blur
from fdikp import tensor as tc
from fdikp.losses import psnr

from oracles import periodic_convolve, supersampled_disk

# mean PSNR(blurry, sharp) of SynthConfig(seed=0, count=20), recorded from the generator
SYNTH20_MEAN_PSNR = 24.330567557483214


class TestDiskKernel:
    def test_radius_zero_is_delta(self):
        assert blur.disk_kernel(0).weights.tolist() == [[1.0]]

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            blur.disk_kernel(-0.1)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.01, 6.0))
    def test_normalized_nonnegative_symmetric(self, r):
        w = blur.disk_kernel(r).weights
        assert w.shape == (2 * math.ceil(r) + 1,) * 2
        assert abs(w.sum() - 1) < 1e-9
        assert (w >= 0).all()
        np.testing.assert_allclose(w, w[::-1, ::-1], atol=1e-15)
        np.testing.assert_allclose(w, w.T, atol=1e-15)

    def test_center_weight_matches_supersampling(self):
        got = blur.disk_kernel(2.0).weights
        ref = supersampled_disk(2.0, 16)
        assert abs(got[2, 2] - ref[2, 2]) < 1e-3

    @pytest.mark.parametrize("r", [0.7, 1.5, 2.5, 3.3])
    def test_whole_kernel_matches_fine_supersampling(self, r):
        assert np.abs(blur.disk_kernel(r).weights - supersampled_disk(r, 64)).max() < 2e-3

    def test_coverage_total_is_disk_area(self):
        r = 2.7
        c = np.arange(-3, 4, dtype=float)
        total = blur.disk_coverage(r, c[:, None], c[None, :]).sum()
        assert abs(total - math.pi * r * r) < 1e-9


class TestGaussianKernel:
    def test_flat_limit(self):
        np.testing.assert_allclose(blur.gaussian_kernel(1e6, 5).weights, 1 / 25, atol=1e-6)

    def test_point_symmetry_exact(self):
        w = blur.gaussian_kernel(1.3, 7).weights
        assert np.array_equal(w, w[::-1, ::-1])

    def test_center_to_edge_ratio(self):
        w = blur.gaussian_kernel(1.0, 7).weights
        assert w[3, 3] / w[3, 0] == pytest.approx(math.exp(9 / 2), rel=1e-12)

    def test_even_size_rejected(self):
        with pytest.raises(ValueError):
            blur.gaussian_kernel(1.0, 4)


class TestUniformBlur:
    def test_delta(self):
        img = np.random.default_rng(0).random((3, 10, 10))
        assert np.array_equal(blur.blur_uniform(img, blur.disk_kernel(0)), img)

    def test_constant(self):
        np.testing.assert_allclose(blur.blur_uniform(np.full((9, 9), 0.3), blur.disk_kernel(2.2)), 0.3,
                                   atol=1e-12)

    def test_disk_periodic_matches_spectral(self):
        img = np.random.default_rng(1).random((64, 64))
        k = blur.disk_kernel(3).weights
        got = blur.blur_uniform(img, k, "periodic")
        spectral = tc.ifft2(tc.fft2(img) * tc.fft2(tc.embed_centered(k, img.shape)))
        assert np.abs(got - spectral).max() < 1e-9
        assert np.abs(got - periodic_convolve(img, k)).max() < 1e-12

    @pytest.mark.parametrize("boundary", ["reflect", "periodic"])
    def test_mean_preserved(self, boundary):
        img = np.random.default_rng(2).random((32, 32))
        out = blur.blur_uniform(img, blur.disk_kernel(2.5), boundary)
        # periodic blur preserves the mean exactly; reflect only up to border effects
        tol = 1e-12 if boundary == "periodic" else 5e-3
        assert abs(out.mean() - img.mean()) < tol


class TestVaryingBlur:
    def test_zero_radius_identity(self):
        img = np.random.default_rng(3).random((3, 16, 16))
        assert np.array_equal(blur.blur_varying(img, np.zeros((16, 16))), img)

    @pytest.mark.parametrize("r", [1.0, 2.4])
    def test_constant_radius_matches_uniform_interior(self, r):
        img = np.random.default_rng(4).random((24, 24))
        got = blur.blur_varying(img, np.full(img.shape, r))
        ref = blur.blur_uniform(img, blur.disk_kernel(r))
        m = math.ceil(r)
        assert np.abs(got - ref)[m:-m, m:-m].max() < 1e-9

    def test_two_regions(self):
        img = np.random.default_rng(5).random((32, 48))
        rmap = np.ones(img.shape)
        rmap[:, 24:] = 3.0
        got = blur.blur_varying(img, rmap)
        left = blur.blur_uniform(img, blur.disk_kernel(1.0))
        right = blur.blur_uniform(img, blur.disk_kernel(3.0))
        # stay ceil(3)+1 px away from the seam and outer border
        assert np.abs(got - left)[4:-4, 4:24 - 4].max() < 1e-6
        assert np.abs(got - right)[4:-4, 24 + 4:-4].max() < 1e-6

    def test_locality(self):
        rng = np.random.default_rng(6)
        img = rng.random((20, 20))
        rmap = 1 + 2 * rng.random((20, 20))
        base = blur.blur_varying(img, rmap)
        bumped = img.copy()
        bumped[10, 10] += 1.0
        diff = np.abs(blur.blur_varying(bumped, rmap) - base) > 0
        ys, xs = np.nonzero(diff)
        assert np.max(np.abs(ys - 10)) <= 3 and np.max(np.abs(xs - 10)) <= 3

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_never_brightens(self, seed):
        rng = np.random.default_rng(seed)
        img = rng.random((12, 12))
        out = blur.blur_varying(img, 4 * rng.random((12, 12)))
        assert out.max() <= img.max() + 1e-12
        assert out.min() >= img.min() - 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            blur.blur_varying(np.zeros((3, 8, 8)), np.zeros((8, 9)))


class TestSynth:
    def test_deterministic(self):
        cfg = blur.SynthConfig(seed=3, count=3, patch=32)
        a, b = blur.synth_dataset(cfg), blur.synth_dataset(cfg)
        for p, q in zip(a, b):
            assert np.array_equal(p.sharp, q.sharp) and np.array_equal(p.blurry, q.blurry)
            assert np.array_equal(p.radius, q.radius)

    def test_noise_free_equals_blur(self):
        cfg = blur.SynthConfig(seed=1, count=2, patch=32, noise_sigma=0.0)
        for p in blur.synth_dataset(cfg):
            assert np.array_equal(p.blurry, np.clip(blur.blur_varying(p.sharp, p.radius), 0, 1))

    def test_pair_invariants(self):
        cfg = blur.SynthConfig(seed=2, count=4, patch=40, radius_min=1, radius_max=4)
        for p in blur.synth_dataset(cfg):
            assert p.sharp.shape == p.blurry.shape == (3, 40, 40)
            assert p.blurry.min() >= 0 and p.blurry.max() <= 1
            assert p.radius.min() >= 1 and p.radius.max() <= 4
            assert np.isfinite(p.radius).all()

    def test_inverted_range_rejected(self):
        with pytest.raises(ValueError):
            blur.synth_dataset(blur.SynthConfig(radius_min=3, radius_max=1))

    def test_pinned_mean_psnr(self):
        pairs = blur.synth_dataset(blur.SynthConfig(seed=0, count=20))
        value = float(np.mean([psnr(p.sharp, p.blurry) for p in pairs]))
        assert value == SYNTH20_MEAN_PSNR

    def test_dataset_directory_round_trip(self, tmp_path):
        cfg = blur.SynthConfig(seed=4, count=2, patch=24)
        pairs = blur.synth_dataset(cfg)
        blur.write_dataset(tmp_path, pairs, cfg)
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["0000_blur.png", "0000_radius.fdkt", "0000_sharp.png", "0001_blur.png",
                         "0001_radius.fdkt", "0001_sharp.png", "manifest.json"]
        back = blur.read_dataset(tmp_path)
        for p, q in zip(pairs, back):
            assert np.abs(p.sharp - q.sharp).max() <= 0.5 / 255 + 1e-12
            assert np.array_equal(blur.to_uint8(p.blurry), blur.to_uint8(q.blurry))
            np.testing.assert_allclose(q.radius, p.radius, rtol=1e-6)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            blur.read_dataset(tmp_path / "nope")
