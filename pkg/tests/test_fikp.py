import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdikp import fikp
from fdikp import tensor as tc
from fdikp.autodiff import Graph, ParamStore, Scope
from fdikp.blur import disk_kernel, gaussian_kernel
from fdikp.config import ModelConfig
from fdikp.losses import psnr
from fdikp.pipeline.gradsuite import TOY, check_fikp

from oracles import atrous_correlate_interior, gather_correlate, periodic_convolve

CFG = ModelConfig()


def fresh(cfg=CFG, seed=0):
    store = ParamStore(np.float64)
    fikp.init_fikp(store, np.random.default_rng(seed), cfg)
    return store


def scope(store, g=None):
    g = g or Graph(np.float64)
    return g, Scope(g, store, "fikp.")


class TestAnalyticInverse:
    def test_delta_eps_zero(self):
        d = np.zeros((5, 5))
        d[2, 2] = 1
        inv = fikp.analytic_inverse(d, 8, 0.0, support=5)
        assert np.abs(inv - d).max() < 1e-12

    @staticmethod
    def _round_trip(eps):
        img = np.random.default_rng(0).random((64, 64))
        k = gaussian_kernel(1.0, 9).weights
        blurred = tc.conv2d_same(img, k, "periodic")
        inv = fikp.analytic_inverse(k, 64, eps)
        # the full 64x64 response is centred at index 32; move its origin to (0, 0)
        response = np.fft.ifftshift(inv)
        restored = tc.ifft2(tc.fft2(blurred) * tc.fft2(response))
        return psnr(img, restored)

    def test_gaussian_round_trip_psnr(self):
        # frozen from a standalone numpy Wiener round trip; the smallest |K|^2 on this
        # grid is 4.3e-8, so eps 1e-8 costs real accuracy at the Nyquist corner
        assert abs(self._round_trip(1e-8) - 46.88699374988356) < 1e-6
        assert self._round_trip(1e-10) >= 60

    def test_disk_composition_against_spectral_oracle(self):
        pad = 32
        k = disk_kernel(2.0).weights
        inv = fikp.analytic_inverse(k, pad, 1e-3)
        composed = periodic_convolve(inv, k)
        delta = np.zeros((pad, pad))
        delta[pad // 2, pad // 2] = 1
        got = np.abs(composed - delta).sum()
        spec = np.fft.fft2(tc.embed_centered(k, (pad, pad)))
        ref_plane = np.fft.fftshift(np.fft.ifft2(spec * np.conj(spec) / (np.abs(spec) ** 2 + 1e-3)).real)
        ref = np.abs(ref_plane - delta).sum()
        assert abs(got - ref) < 1e-6
        assert got > 0

    def test_singular_reports_bin(self):
        box = np.full((3, 3), 1 / 9)
        with pytest.raises(ZeroDivisionError, match="bin"):
            fikp.analytic_inverse(box, 6, 0.0)
        fikp.analytic_inverse(box, 6, 1e-3)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            fikp.analytic_inverse(np.ones((5, 5)), 4, 0.1)
        with pytest.raises(ValueError):
            fikp.analytic_inverse(np.ones((5, 5)), 8, -1)

    def test_bank_sums_to_one(self):
        bank = fikp.inverse_bank(5, 5)
        assert bank.shape == (5, 5, 5)
        np.testing.assert_allclose(bank.sum(axis=(1, 2)), 1.0, atol=1e-12)


class TestPredictor:
    @pytest.mark.parametrize("size", [64, 96, 128])
    def test_shape_and_normalization(self, size):
        store = fresh()
        g, p = scope(store)
        plane = g.constant(np.random.default_rng(size).random((1, 1, size, size)))
        out = fikp.predictor_forward(plane, p.sub("amp"), 5, 5).value
        assert out.shape == (1, 5, 5, 5)
        assert (out > 0).all()
        np.testing.assert_allclose(out.sum(axis=(2, 3)), 1.0, atol=1e-6)

    def test_small_plane_rejected(self):
        g, p = scope(fresh())
        with pytest.raises(ValueError, match="smaller"):
            fikp.predictor_forward(g.constant(np.zeros((1, 1, 4, 9))), p.sub("amp"), 5, 5)


class TestAttention:
    def test_weights_simplex(self):
        g, p = scope(fresh())
        amp = g.constant(np.random.default_rng(1).random((2, 1, 24, 24)))
        w = fikp.attention_forward(amp, p.sub("att"), 5).value
        assert w.shape == (2, 5)
        assert ((w > 0) & (w < 1)).all()
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-6)

    def test_constant_plane_gives_bias_softmax(self):
        store = fresh()
        store.params["fikp.att.c.b"] = np.array([0.3, -0.1, 0.0, 0.7, -0.4])
        g, p = scope(store)
        w = fikp.attention_forward(g.constant(np.full((1, 1, 16, 16), 2.5)), p.sub("att"), 5).value[0]
        b = store["fikp.att.c.b"]
        ref = np.exp(b) / np.exp(b).sum()
        assert np.abs(w - ref).max() < 1e-12
        # regression pin for the default zero bias: uniform weights
        g, p = scope(fresh())
        w0 = fikp.attention_forward(g.constant(np.full((1, 1, 16, 16), 2.5)), p.sub("att"), 5).value[0]
        assert np.abs(w0 - 0.2).max() < 1e-12


class TestDIKP:
    def setup_method(self):
        self.img = np.random.default_rng(2).random((1, 3, 32, 32))
        self.store = fresh()
        # sharpen the softmax logits so the predicted spectra are far from uniform
        for br in ("amp", "phase"):
            self.store.params[f"fikp.{br}.c3.w"] *= 40

    def test_kernel_set_shapes_and_sum(self):
        g, p = scope(self.store)
        out = fikp.dikp_predict(g.constant(self.img), p, CFG)
        assert out["kernels"].shape == (1, 5, 5, 5)
        np.testing.assert_allclose(out["kernels"].value.sum(axis=(2, 3)), 1.0, atol=1e-12)

    def test_reconstruction_consistency(self):
        ks, _, _ = fikp.predict_kernels(self.img[0], self.store, CFG)
        real, _ = ks.reconstruct()
        assert np.abs(real - ks.kernels).max() < 1e-9
        assert (ks.amplitude >= 0).all()

    def test_zero_phase_centrosymmetric(self):
        g, p = scope(self.store)
        k = fikp.dikp_predict(g.constant(self.img), p, CFG, zero_phase=True)["kernels"].value[0]
        assert np.abs(k - k[:, ::-1, ::-1]).max() < 1e-9

    def test_imaginary_residue_needs_symmetric_amplitude(self):
        ks, _, _ = fikp.predict_kernels(self.img[0], self.store, CFG)
        zero = fikp.KernelSet(ks.kernels, ks.amplitude, np.zeros_like(ks.phase), ks.offset)
        _, imag = zero.reconstruct()
        # a real, even-indexed spectrum is not Hermitian unless the amplitude is centrosymmetric
        sym = 0.5 * (ks.amplitude + ks.amplitude[:, ::-1, ::-1])
        _, imag_sym = fikp.KernelSet(ks.kernels, sym, np.zeros_like(ks.phase), ks.offset).reconstruct()
        assert np.abs(imag_sym).max() < 1e-6
        assert np.abs(imag).max() > 1e-6

    def test_phase_map_affine(self):
        g = Graph()
        w = g.constant(np.array([[0.4, 0.6]]))
        for t, base in ((0.0, -np.pi), (1 / 18, 0.0), (1 / 9, np.pi)):
            got = fikp.phase_map(g.constant(np.full((1, 2, 3, 3), t)), w, 3).value
            np.testing.assert_allclose(got[0, :, 0, 0], base * np.array([0.4, 0.6]), atol=1e-14)


class TestDilatedMap:
    def test_zero_parameters_midpoint(self):
        store = fresh()
        for k in store.names():
            store.params[k] = np.zeros_like(store[k])
        g, p = scope(store)
        d = fikp.dilated_map(g.constant(np.random.default_rng(3).random((1, 3, 8, 8))), p.sub("dil"), CFG)
        np.testing.assert_allclose(d.value, 4.25, atol=1e-15)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.1, 20))
    def test_bounds(self, seed, scale):
        store = fresh(seed=seed)
        for k in store.names():
            store.params[k] = store[k] * scale
        g, p = scope(store)
        d = fikp.dilated_map(g.constant(np.random.default_rng(seed).random((1, 3, 8, 8))), p.sub("dil"), CFG).value
        assert (d >= CFG.d_min).all() and (d <= CFG.d_max).all()


class TestPAC:
    def setup_method(self):
        rng = np.random.default_rng(4)
        self.plane = rng.random((32, 32))
        self.k = rng.normal(size=(5, 5))

    def test_unit_dilation_is_correlation(self):
        got = fikp.pac_apply_plane(self.plane, self.k, 1.0)
        ref = tc.conv2d_same(self.plane, self.k[::-1, ::-1], "clamp")
        assert np.abs(got - ref).max() < 1e-12

    def test_dilation_two_is_atrous_interior(self):
        got = fikp.pac_apply_plane(self.plane, self.k, 2.0)
        ref = atrous_correlate_interior(self.plane, self.k, 2)
        mask = ~np.isnan(ref)
        assert mask.sum() == 24 * 24
        assert np.abs(got[mask] - ref[mask]).max() < 1e-12

    def test_fractional_dilation_gather_oracle(self):
        got = fikp.pac_apply_plane(self.plane, self.k, 1.5)
        ref = gather_correlate(self.plane, self.k, 1.5)
        assert np.abs(got - ref).max() < 1e-10

    def test_varying_dilation_gather_oracle(self):
        dmap = 0.5 + 3 * np.random.default_rng(5).random((12, 12))
        plane = self.plane[:12, :12]
        got = fikp.pac_apply_plane(plane, self.k, dmap)
        assert np.abs(got - gather_correlate(plane, self.k, dmap)).max() < 1e-10

    def test_channel_layout(self):
        g = Graph()
        img = np.random.default_rng(6).random((1, 3, 8, 8))
        ks = np.random.default_rng(7).normal(size=(1, 2, 3, 3))
        out = fikp.pac_apply(g.constant(img), g.constant(ks), g.constant(np.ones((1, 1, 8, 8)))).value
        for n in range(2):
            for c in range(3):
                ref = fikp.pac_apply_plane(img[0, c], ks[0, n], 1.0)
                assert np.abs(out[0, n * 3 + c] - ref).max() < 1e-12

    def test_shape_mismatch(self):
        g = Graph()
        with pytest.raises(ValueError):
            fikp.pac_apply(g.constant(np.zeros((1, 1, 8, 8))), g.constant(np.zeros((1, 1, 3, 3))),
                           g.constant(np.ones((1, 1, 8, 7))))


class TestFikpForward:
    def test_channels_and_determinism(self):
        store = fresh()
        x = np.random.default_rng(8).random((1, 3, 16, 16))
        outs = []
        for _ in range(2):
            g, p = scope(store)
            outs.append(fikp.fikp_forward(g.constant(x), g.constant(x), p, CFG).value)
        assert outs[0].shape == (1, 30, 16, 16)
        assert np.array_equal(outs[0], outs[1])

    @pytest.mark.parametrize("flag", ["disable_pac", "disable_dikp"])
    def test_ablation_toggles_run(self, flag):
        from dataclasses import replace

        cfg = replace(CFG, **{flag: True})
        g, p = scope(fresh())
        x = np.random.default_rng(9).random((1, 3, 16, 16))
        out = fikp.fikp_forward(g.constant(x), g.constant(x), p, cfg).value
        assert out.shape == (1, 30, 16, 16) and np.isfinite(out).all()

    def test_prev_shape_mismatch(self):
        g, p = scope(fresh())
        with pytest.raises(ValueError):
            fikp.fikp_forward(g.constant(np.zeros((1, 3, 8, 8))), g.constant(np.zeros((1, 3, 8, 4))), p, CFG)

    def test_gradient_8x8_toy(self):
        rep = check_fikp(TOY, size=8, seed=3, n_samples=80)
        assert rep.passed, rep.line()
