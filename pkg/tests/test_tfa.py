import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gearfuse import tfa
from gearfuse.tfa import L_MAX, L_MIN, TFGrid, WindowSchedule

BOUND = 1 / (4 * np.pi)


def _chirp(n=1536):
    t = np.arange(n)
    return np.cos(2 * np.pi * (0.02 * t + 0.15 * t**2 / (2 * n)))


class TestWindows:
    def test_rectangular(self):
        np.testing.assert_array_equal(tfa.make_window("rectangular", 4).coefficients, [1, 1, 1, 1])

    @pytest.mark.parametrize("length", [17, 33, 127])
    def test_gaussian_peak_and_symmetry(self, length):
        w = tfa.make_window("gaussian", length).coefficients
        assert w.argmax() == (length - 1) // 2
        assert w[(length - 1) // 2] == 1.0
        np.testing.assert_allclose(w, w[::-1], atol=0)
        assert np.all(w >= 0) and w.size == length

    def test_errors(self):
        with pytest.raises(ValueError):
            tfa.make_window("gaussian", 1)
        with pytest.raises(ValueError):
            tfa.make_window("kaiser", 16)

    @pytest.mark.parametrize("sigma", [0.3, 0.4])
    def test_gaussian_near_uncertainty_bound(self, sigma):
        tbp = tfa.time_bandwidth_product(tfa.make_window("gaussian", 64, sigma))
        assert abs(tbp - BOUND) / BOUND < 0.05

    def test_tbp_ranking(self):
        tb = {k: tfa.time_bandwidth_product(tfa.make_window(k, 64)) for k in tfa.WINDOW_KINDS}
        assert tb["gaussian"] < tb["hanning"] and tb["gaussian"] < tb["rectangular"]

    def test_off_bin_sidelobes(self):
        L = 64
        x = np.cos(2 * np.pi * 10.5 / L * np.arange(8 * L))
        far = np.abs(np.arange(L // 2 + 1) - 10.5) > 4

        def sidelobe(kind):
            mag = np.abs(tfa.stft(x, tfa.make_window(kind, L), L)[3])
            return (mag / mag.max())[far].max()

        assert sidelobe("gaussian") < sidelobe("rectangular")


class TestStft:
    def test_shape(self):
        frames = tfa.stft(np.zeros(1536), tfa.make_window("gaussian", 64), 16)
        assert frames.shape == (93, 33)

    def test_on_bin_tone(self):
        L, k = 32, 5
        x = np.sin(2 * np.pi * k / L * np.arange(8 * L) + 0.3)
        mags = np.abs(tfa.stft(x, tfa.make_window("rectangular", L), 8))
        assert np.all(mags.argmax(axis=1) == k)

    def test_zero(self):
        assert not np.any(tfa.stft(np.zeros(300), tfa.make_window("hanning", 32), 4))

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            tfa.stft(np.zeros(0), tfa.make_window("hanning", 32))

    def test_centered_frame_count(self):
        frames = tfa.stft(np.zeros(1536), tfa.make_window("gaussian", 63), 16, center=True)
        assert frames.shape[0] == 1536 // 16

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**16), a=st.floats(-5, 5), b=st.floats(-5, 5))
    def test_linearity(self, seed, a, b):
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal((2, 256))
        w = tfa.make_window("gaussian", 48)
        lhs = tfa.stft(a * x + b * y, w, 16)
        rhs = a * tfa.stft(x, w, 16) + b * tfa.stft(y, w, 16)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12 * max(1.0, abs(a) + abs(b)) * 64)


class TestSpectrogram:
    def test_magnitude(self):
        assert tfa.spectrogram(np.array([[3 + 4j]])).values[0, 0] == 5.0

    def test_zero(self):
        assert not np.any(tfa.spectrogram(np.zeros((4, 5), complex)).values)

    def test_rows_are_frequency(self):
        g = tfa.spectrogram(np.zeros((7, 5), complex))
        assert g.shape == (5, 7)

    def test_parseval_rectangular_tiling(self):
        L = 64
        x = np.random.default_rng(1).standard_normal(16 * L)
        mags = tfa.spectrogram(tfa.stft(x, tfa.make_window("rectangular", L), L)).values
        weight = np.full(L // 2 + 1, 2.0)
        weight[[0, -1]] = 1.0      # one-sided spectrum: DC and Nyquist appear once
        total = np.sum(weight[:, None] * mags**2) / L
        assert total == pytest.approx(np.sum(x**2), rel=1e-9)


class TestGrid:
    def test_rejects_negative_and_empty(self):
        with pytest.raises(ValueError):
            TFGrid(np.array([[1.0, -1e-3]]))
        with pytest.raises(ValueError):
            TFGrid(np.zeros((0, 3)))
        with pytest.raises(ValueError):
            TFGrid(np.zeros(3))


class TestWvd:
    def test_tone_concentrates(self):
        f0, n = 0.1, 256
        g = tfa.wvd(np.cos(2 * np.pi * f0 * np.arange(n)))
        rows = g.values.shape[0]
        # row k is frequency k / (2 * rows)
        expected = int(round(f0 * 2 * rows))
        assert np.all(g.values.argmax(axis=0)[20:-20] == expected)

    def test_zero(self):
        assert not np.any(tfa.wvd(np.zeros(64)).values)

    def test_two_tone_cross_term(self):
        n = 256
        t = np.arange(n)
        g = tfa.wvd(np.cos(2 * np.pi * 0.1 * t) + np.cos(2 * np.pi * 0.2 * t)).values
        mid = int(round(0.15 * 2 * g.shape[0]))
        col = g[:, n // 2]
        assert col[mid] > 0.1 * col.max()
        assert mid in np.argsort(col)[-3:]

    def test_tone_marginal(self):
        x = np.cos(2 * np.pi * 0.1 * np.arange(256))
        dist = tfa.wvd_distribution(x)
        marginal = dist.sum(axis=0) / dist.shape[0]
        # analytic tone has |z|^2 = 1 away from the edges
        np.testing.assert_allclose(marginal[32:-32], 1.0, rtol=0.05)

    def test_real_symmetric_output(self):
        dist = tfa.wvd_distribution(np.random.default_rng(0).standard_normal(64), n_fft=32)
        assert dist.shape == (32, 64) and np.isrealobj(dist)


class TestSchedule:
    def test_bounds(self):
        with pytest.raises(ValueError):
            WindowSchedule((15,) + (64,) * 15)
        with pytest.raises(ValueError):
            WindowSchedule((L_MAX + 1,) * 16)
        with pytest.raises(ValueError):
            WindowSchedule((64,) * 15)
        assert WindowSchedule.uniform(L_MIN).lengths == (16,) * 16


class TestAstft:
    @pytest.mark.parametrize("length", [16, 64, 127])
    def test_uniform_is_plain_spectrogram(self, length):
        x = np.random.default_rng(length).standard_normal(1536)
        g = tfa.astft(x, WindowSchedule.uniform(length))
        w = tfa.make_window("gaussian", length)
        ref = tfa.spectrogram(tfa.stft(x, w, 16, center=True, normalized=True)).values
        np.testing.assert_allclose(g.values, ref, atol=1e-9)

    def test_shape(self):
        sched = WindowSchedule(tuple(range(16, 16 + 7 * 16, 7)))
        g = tfa.astft(np.ones(1536), sched)
        assert g.shape == (tfa.n_bins(max(sched)), 1536 // 16)

    def test_chirp_energy(self):
        sched = WindowSchedule((24,) * 8 + (120,) * 8)
        g = tfa.astft(_chirp(), sched).values
        w = tfa.make_window("gaussian", 120)
        ref = np.abs(tfa.stft(_chirp(), w, 16, center=True, normalized=True))
        assert np.sum(g**2) == pytest.approx(np.sum(ref**2), rel=0.05)

    def test_bound_violation(self):
        with pytest.raises(ValueError):
            tfa.astft(np.ones(256), (15,) * 16)

    def test_plan_matches_function(self):
        x = _chirp(512)
        sched = WindowSchedule((40,) * 16)
        plan = tfa.AstftPlan(x)
        np.testing.assert_array_equal(plan.grid(sched).values, tfa.astft(x, sched).values)

    def test_pads_to_sections(self):
        g = tfa.astft(np.ones(1000), WindowSchedule.uniform(32))
        assert g.shape[1] == 1008 // 16


class TestResample:
    def test_identity(self):
        v = np.random.default_rng(0).random((5, 7))
        np.testing.assert_array_equal(tfa.resample_array(v, 5, 7), v)

    @pytest.mark.parametrize("shape", [(1, 1), (3, 9), (64, 2), (40, 40)])
    def test_constant(self, shape):
        out = tfa.resample_grid(TFGrid(np.full((6, 11), 2.5)), *shape)
        np.testing.assert_allclose(out.values, 2.5)
        assert out.shape == shape

    def test_bilinear_centre(self):
        out = tfa.resample_array(np.array([[0.0, 2.0], [2.0, 4.0]]), 3, 3)
        assert out[1, 1] == pytest.approx(2.0)
        np.testing.assert_allclose(out[[0, 0, -1, -1], [0, -1, 0, -1]], [0, 2, 2, 4])

    def test_downsampling_keeps_narrow_peaks(self):
        v = np.zeros((65, 4))
        v[33] = 1.0     # falls between output rows when shrinking 65 -> 32
        out = tfa.resample_array(v, 32, 4)
        assert out.max() > 0.3

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**16), rows=st.integers(1, 40), cols=st.integers(1, 40))
    def test_convex(self, seed, rows, cols):
        v = np.random.default_rng(seed).random((9, 13))
        out = tfa.resample_array(v, rows, cols)
        assert out.min() >= v.min() - 1e-12 and out.max() <= v.max() + 1e-12


class TestExport:
    def test_minmax(self):
        np.testing.assert_allclose(tfa.minmax_scale(np.array([2.0, 4.0, 3.0])), [0, 1, 0.5])
        assert not np.any(tfa.minmax_scale(np.full(3, 7.0)))

    def test_csv_round_trip(self, tmp_path):
        g = TFGrid(np.random.default_rng(0).random((4, 6)), 0.5, 0.25)
        tfa.write_grid_csv(g, tmp_path / "g.csv")
        back = tfa.read_grid_csv(tmp_path / "g.csv")
        np.testing.assert_array_equal(back.values, g.values)
        assert (back.time_step, back.freq_step) == (0.5, 0.25)

    def test_pgm(self, tmp_path):
        g = TFGrid(np.arange(12.0).reshape(3, 4))
        tfa.write_pgm(g, tmp_path / "g.pgm")
        blob = (tmp_path / "g.pgm").read_bytes()
        assert blob.startswith(b"P5 4 3 255\n")
        img = tfa.read_pgm(tmp_path / "g.pgm")
        assert img.min() == 0 and img.max() == 255
        # top image row holds the highest frequency row
        assert img[0, -1] == 255 and img[-1, 0] == 0
