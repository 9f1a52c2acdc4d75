import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gearfuse import signal as sg
from gearfuse.signal import (
    CASE_I_CLASSES,
    CASE_II_CLASSES,
    Channel,
    FaultKind,
    SegmentSpec,
    SyntheticFaultSpec,
    TimeSeries,
)


def kurtosis(x):
    x = np.asarray(x) - np.mean(x)
    return float(np.mean(x**4) / np.mean(x**2) ** 2 - 3.0)


class TestSegment:
    def test_single_full_length_segment(self):
        segs = sg.segment(np.arange(1536.0), SegmentSpec(1536, 1536))
        assert len(segs) == 1 and segs[0].size == 1536

    def test_exact_tiling(self):
        segs = sg.segment(np.arange(4096.0), SegmentSpec(2048, 2048))
        assert len(segs) == 2
        assert segs[1][0] == 2048.0

    def test_overlapping_count(self):
        # floor((1536 - 64) / 16) + 1
        assert len(sg.segment(np.zeros(1536), SegmentSpec(64, 16))) == 93

    def test_short_series_raises(self):
        with pytest.raises(ValueError, match="shorter"):
            sg.segment(TimeSeries(np.zeros(10), 100.0), SegmentSpec(11, 1))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SegmentSpec(1, 1)
        with pytest.raises(ValueError):
            SegmentSpec(8, 0)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(2, 400), length=st.integers(2, 400), hop=st.integers(1, 50))
    def test_count_matches_enumeration(self, n, length, hop):
        if length > n:
            return
        x = np.arange(n, dtype=float)
        segs = sg.segment(x, SegmentSpec(length, hop))
        starts = [s for s in range(n) if s % hop == 0 and s + length <= n]
        assert len(segs) == len(starts)
        for seg, s in zip(segs, starts):
            assert seg[0] == s and seg.size == length


class TestTimeSeries:
    def test_rejects_empty_and_bad_rate(self):
        with pytest.raises(ValueError):
            TimeSeries(np.zeros(0), 1.0)
        with pytest.raises(ValueError):
            TimeSeries(np.zeros(4), 0.0)


class TestNormalize:
    def test_constant(self):
        np.testing.assert_array_equal(sg.normalize([1, 1, 1, 1]), [0, 0, 0, 0])

    def test_already_standard(self):
        np.testing.assert_allclose(sg.normalize([-1, 1]), [-1, 1])

    def test_moments(self):
        y = sg.normalize(np.random.default_rng(3).normal(5, 3, 1536))
        assert abs(y.mean()) < 1e-12
        assert abs(y.std() - 1) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000), scale=st.floats(1e-3, 1e3))
    def test_idempotent_and_scale_invariant(self, seed, scale):
        x = np.random.default_rng(seed).standard_normal(64)
        y = sg.normalize(x)
        np.testing.assert_allclose(sg.normalize(y), y, atol=1e-12)
        np.testing.assert_allclose(sg.normalize(scale * x), y, atol=1e-12)


def _series(kind, n=8192, seed=5, snr=10.0, channel=Channel.H):
    return sg.synthesize(SyntheticFaultSpec(kind, snr_db=snr, seed=seed), n, channel=channel).samples


class TestSynthesize:
    def test_healthy_peak_at_mesh(self):
        x = _series(FaultKind.HEALTHY, snr=40.0)
        spec = np.abs(np.fft.rfft(x))
        freqs = np.fft.rfftfreq(x.size, 1 / sg.DEFAULT_SAMPLE_RATE)
        assert freqs[spec.argmax()] == pytest.approx(sg.DEFAULT_MESH_HZ, abs=0.5)

    def test_broken_tooth_is_more_impulsive(self):
        assert kurtosis(_series(FaultKind.BROKEN_TOOTH)) > kurtosis(_series(FaultKind.HEALTHY))

    def test_missing_tooth_is_more_impulsive(self):
        assert kurtosis(_series(FaultKind.MISSING_TOOTH)) > kurtosis(_series(FaultKind.BROKEN_TOOTH))

    def test_eccentric_low_band_energy(self):
        def low(x):
            spec = np.abs(np.fft.rfft(x)) ** 2
            freqs = np.fft.rfftfreq(x.size, 1 / sg.DEFAULT_SAMPLE_RATE)
            return spec[freqs < 2 * sg.DEFAULT_SHAFT_HZ].sum()

        assert low(_series(FaultKind.ECCENTRIC)) > low(_series(FaultKind.HEALTHY))

    def test_pure(self):
        a = _series(FaultKind.CRACK, seed=9)
        b = _series(FaultKind.CRACK, seed=9)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, _series(FaultKind.CRACK, seed=10))

    def test_channels_differ(self):
        h = _series(FaultKind.WEAR, channel=Channel.H)
        v = _series(FaultKind.WEAR, channel=Channel.V)
        assert not np.allclose(h, v)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            SyntheticFaultSpec(FaultKind.HEALTHY, mesh_freq_hz=10.0, shaft_freq_hz=20.0)
        with pytest.raises(ValueError):
            SyntheticFaultSpec("rust")
        with pytest.raises(ValueError, match="Nyquist"):
            sg.synthesize(SyntheticFaultSpec(FaultKind.HEALTHY, mesh_freq_hz=400.0), 1024, 2048.0)

    def test_band_energy_linear_probe_beats_chance(self):
        # least-squares one-vs-rest on log band energies of short segments
        def features(x):
            p = np.abs(np.fft.rfft(x)) ** 2
            return np.log(np.array([b.sum() for b in np.array_split(p, 16)]) + 1e-12)

        rng = np.random.default_rng(0)
        X, y = [], []
        for label, kind in enumerate(CASE_I_CLASSES):
            x = _series(kind, n=512 * 60, seed=label + 20, snr=0.0)
            for seg in sg.segment(x, SegmentSpec(512, 512)):
                X.append(features(sg.normalize(seg)))
                y.append(label)
        X, y = np.array(X), np.array(y)
        order = rng.permutation(y.size)
        X, y = X[order], y[order]
        A = np.hstack([X, np.ones((len(X), 1))])
        tr, te = slice(0, 200), slice(200, None)
        W = np.linalg.lstsq(A[tr], np.eye(5)[y[tr]], rcond=None)[0]
        acc = np.mean((A[te] @ W).argmax(axis=1) == y[te])
        assert acc > 1 / 5 + 0.2


class TestBuildDataset:
    @pytest.mark.parametrize("per, classes, expected", [
        (1000, CASE_I_CLASSES, (3000, 1000, 1000)),
        (800, CASE_II_CLASSES, (2880, 960, 960)),
    ])
    def test_split_sizes(self, per, classes, expected):
        # sizes only; the real table-scale build happens in the CLI tests
        counts = tuple(len(classes) * c for c in sg.split_counts(per))
        assert counts == expected
        assert sum(counts) == per * len(classes)

    def test_small_build(self):
        ds = sg.build_dataset(20, CASE_I_CLASSES, 256, seed=1)
        assert (len(ds.train), len(ds.validation), len(ds.test)) == (60, 20, 20)
        for sub, n in ((ds.train, 12), (ds.validation, 4), (ds.test, 4)):
            np.testing.assert_array_equal(np.bincount(sub.labels), [n] * 5)
        assert ds.class_names == CASE_I_CLASSES
        assert ds.segment_length == 256

    def test_no_sample_in_two_splits(self):
        ds = sg.build_dataset(20, ("healthy", "wear"), 128, seed=2)
        rows = [r.tobytes() for sub in ds.splits().values() for r in sub.h]
        assert len(rows) == len(set(rows))

    def test_segments_are_normalized(self):
        ds = sg.build_dataset(10, ("healthy", "crack"), 256, seed=0)
        assert np.abs(ds.train.h.mean(axis=1)).max() < 1e-5
        assert np.abs(ds.train.v.std(axis=1) - 1).max() < 1e-5

    def test_deterministic_bytes(self):
        a = sg.dataset_bytes(sg.build_dataset(10, ("healthy", "crack"), 128, seed=4))
        b = sg.dataset_bytes(sg.build_dataset(10, ("healthy", "crack"), 128, seed=4))
        c = sg.dataset_bytes(sg.build_dataset(10, ("healthy", "crack"), 128, seed=5))
        assert a == b and a != c

    def test_bad_count(self):
        with pytest.raises(ValueError):
            sg.build_dataset(15, ("healthy", "crack"), 128)


@pytest.fixture(scope="module")
def ds():
    return sg.build_dataset(10, ("healthy", "missing_tooth", "eccentric"), 64, seed=3)


class TestDatasetFile:
    def test_round_trip(self, ds, tmp_path):
        path = tmp_path / "d.gfd"
        sg.save_dataset(ds, path)
        back = sg.load_dataset(path)
        assert back.train == ds.train and back.validation == ds.validation and back.test == ds.test
        assert back.class_names == ds.class_names

    def test_bad_magic(self, ds):
        blob = bytearray(sg.dataset_bytes(ds))
        blob[0:4] = b"XXXX"
        with pytest.raises(sg.BadMagicError, match="bad magic"):
            sg.parse_dataset(bytes(blob))

    @pytest.mark.parametrize("cut", [10, 200, -3])
    def test_truncated(self, ds, cut):
        blob = sg.dataset_bytes(ds)
        with pytest.raises(sg.UnexpectedEndError, match="unexpected end"):
            sg.parse_dataset(blob[:cut])

    def test_version_mismatch(self, ds):
        blob = bytearray(sg.dataset_bytes(ds))
        blob[4] = 9
        with pytest.raises(sg.VersionMismatchError):
            sg.parse_dataset(bytes(blob))

    def test_errors_are_distinct(self):
        kinds = {sg.BadMagicError, sg.UnexpectedEndError, sg.VersionMismatchError}
        assert len(kinds) == 3
        assert all(issubclass(k, sg.DatasetFormatError) for k in kinds)

    def test_csv_export(self, ds, tmp_path):
        path = tmp_path / "d.csv"
        sg.export_csv(ds, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 1 + 30
        assert lines[0].split(",")[:3] == ["split", "label", "h0"]
        assert len(lines[1].split(",")) == 2 + 2 * 64
