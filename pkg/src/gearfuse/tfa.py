"""Windows, STFT, Wigner-Ville distribution and the piecewise-adaptive Gabor STFT."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.signal import hilbert

L_MIN = 16
L_MAX = 127
N_SECTIONS = 16
DEFAULT_SIGMA = 0.3
DEFAULT_HOP = 16

WINDOW_KINDS = ("gaussian", "rectangular", "hanning")


@dataclass(frozen=True)
class Window:
    kind: str
    length: int
    gaussian_sigma: float
    coefficients: np.ndarray


def make_window(kind: str, length: int, sigma: float = DEFAULT_SIGMA) -> Window:
    """Gaussian (peak 1, std = sigma * (L-1)/2), periodic-free Hann, or boxcar."""
    if kind not in WINDOW_KINDS:
        raise ValueError(f"unknown window kind {kind!r}")
    if length < 2:
        raise ValueError(f"window length must be >= 2, got {length}")
    n = np.arange(length, dtype=np.float64)
    half = (length - 1) / 2
    if kind == "gaussian":
        if sigma <= 0:
            raise ValueError("gaussian sigma must be positive")
        w = np.exp(-0.5 * ((n - half) / (sigma * half)) ** 2)
    elif kind == "hanning":
        w = 0.5 - 0.5 * np.cos(2 * np.pi * n / (length - 1))
    else:
        w = np.ones(length)
    w.setflags(write=False)
    return Window(kind, length, sigma, w)


def time_bandwidth_product(window: Window, n_fft: int = 1 << 16) -> float:
    """Delta t * Delta f of a window (samples x cycles/sample).

    Both spreads are RMS widths of the energy densities |h[n]|^2 and
    |H(f)|^2, the latter from a zero-padded DFT over f in [-1/2, 1/2).
    """
    h = window.coefficients
    n = np.arange(h.size, dtype=np.float64)
    p = h**2 / np.sum(h**2)
    t0 = np.sum(n * p)
    dt = np.sqrt(np.sum((n - t0) ** 2 * p))
    spec = np.abs(np.fft.fft(h, n_fft)) ** 2
    f = np.fft.fftfreq(n_fft)
    q = spec / spec.sum()
    f0 = np.sum(f * q)
    df = np.sqrt(np.sum((f - f0) ** 2 * q))
    return float(dt * df)


@dataclass(frozen=True)
class TFGrid:
    """Nonnegative time-frequency magnitude image; rows are frequency (low first)."""

    values: np.ndarray
    time_step: float = 1.0
    freq_step: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] == 0 or v.shape[1] == 0:
            raise ValueError(f"TFGrid needs a nonempty 2-D array, got shape {v.shape}")
        if np.any(v < 0):
            raise ValueError("TFGrid values must be nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class WindowSchedule:
    """Gaussian window length for each of the 16 contiguous signal sections."""

    lengths: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(int(v) for v in self.lengths)
        if len(lengths) != N_SECTIONS:
            raise ValueError(f"schedule needs {N_SECTIONS} lengths, got {len(lengths)}")
        bad = [v for v in lengths if not L_MIN <= v <= L_MAX]
        if bad:
            raise ValueError(f"window lengths {bad} outside [{L_MIN}, {L_MAX}]")
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def uniform(cls, length: int) -> "WindowSchedule":
        return cls((length,) * N_SECTIONS)

    def __iter__(self):
        return iter(self.lengths)


# --- STFT -------------------------------------------------------------------


def _center_pad(x: np.ndarray, length: int) -> np.ndarray:
    # frame j then covers samples centred on j*hop; total frames = ceil(N / hop)
    return np.pad(x, (length // 2, length - 1 - length // 2))


def stft(signal, window: Window, hop: int = DEFAULT_HOP, *, center: bool = False,
         normalized: bool = False) -> np.ndarray:
    """One-sided STFT as a (frames, floor(L/2)+1) complex matrix.

    Frame ``j`` is the DFT of ``x[j*hop : j*hop + L] * h`` using the analysis
    kernel exp(-j w u). With ``center`` the signal is zero padded so frame j
    is centred on sample j*hop. With ``normalized`` the window is scaled to
    unit energy, which makes magnitudes comparable across window lengths.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("stft needs a nonempty 1-D signal")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    L = window.length
    if center:
        x = _center_pad(x, L)
    if x.size < L:
        raise ValueError(f"window length {L} exceeds signal length {x.size}")
    h = window.coefficients
    if normalized:
        h = h / np.sqrt(np.sum(h**2))
    frames = np.lib.stride_tricks.sliding_window_view(x, L)[::hop]
    return np.fft.rfft(frames * h, axis=1)


def spectrogram(frames: np.ndarray, time_step: float = 1.0, freq_step: float = 1.0) -> TFGrid:
    frames = np.asarray(frames)
    if frames.size == 0:
        raise ValueError("empty frame matrix")
    return TFGrid(np.abs(frames).T, time_step, freq_step)


# --- Wigner-Ville -----------------------------------------------------------


def wvd_distribution(signal, n_fft: int | None = None, hop: int = 1, analytic: bool = True) -> np.ndarray:
    """Signed discrete WVD, shape (n_fft, ceil(N / hop)).

    Column t is the DFT over lag m of x[t+m] conj(x[t-m]) for
    |m| <= min(t, N-1-t, n_fft/2 - 1); row k is frequency k / (2 n_fft)
    cycles per sample, so the rows span [0, fs/2).
    """
    x = np.asarray(signal)
    if x.ndim != 1 or x.size < 4:
        raise ValueError("wvd needs a 1-D signal of at least 4 samples")
    z = hilbert(np.real(x)) if analytic and not np.iscomplexobj(x) else x.astype(np.complex128)
    N = z.size
    if n_fft is None:
        n_fft = N + (N % 2)
    times = np.arange(0, N, hop)
    kernel = np.zeros((n_fft, times.size), dtype=np.complex128)
    max_lag = n_fft // 2 - 1
    for col, t in enumerate(times):
        tau = min(int(t), N - 1 - int(t), max_lag)
        m = np.arange(-tau, tau + 1)
        kernel[m % n_fft, col] = z[t + m] * np.conj(z[t - m])
    # kernel is Hermitian in lag, so the transform is real
    return np.real(np.fft.fft(kernel, axis=0))


def wvd(signal, n_fft: int | None = None, hop: int = 1, sample_rate: float = 1.0,
        analytic: bool = True) -> TFGrid:
    """Magnitude of the discrete Wigner-Ville distribution as a TFGrid."""
    dist = wvd_distribution(signal, n_fft, hop, analytic)
    return TFGrid(np.abs(dist), hop / sample_rate, sample_rate / (2 * dist.shape[0]))


# --- resampling -------------------------------------------------------------


@lru_cache(maxsize=512)
def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation operator mapping n_in samples onto n_out, ends aligned.

    When shrinking, the tent kernel is widened by the reduction factor (as
    image libraries do for bilinear reduction) so that narrow features are
    averaged in rather than skipped between sample points.
    """
    if n_in == n_out:
        return np.eye(n_in)
    m = np.zeros((n_out, n_in))
    if n_in == 1:
        m[:, 0] = 1.0
    elif 1 < n_out < n_in:
        pos = np.linspace(0.0, n_in - 1, n_out)
        scale = (n_in - 1) / (n_out - 1)
        w = np.maximum(0.0, 1.0 - np.abs(np.arange(n_in)[None, :] - pos[:, None]) / scale)
        m[:] = w / w.sum(axis=1, keepdims=True)
    else:
        pos = np.zeros(1) if n_out == 1 else np.linspace(0.0, n_in - 1, n_out)
        lo = np.clip(np.floor(pos).astype(int), 0, n_in - 2)
        frac = pos - lo
        rows = np.arange(n_out)
        m[rows, lo] = 1.0 - frac
        m[rows, lo + 1] += frac
    m.setflags(write=False)
    return m


def resample_array(values: np.ndarray, target_rows: int, target_cols: int) -> np.ndarray:
    """Separable bilinear resampling of a 2-D array (corner-aligned)."""
    if target_rows < 1 or target_cols < 1:
        raise ValueError("resample targets must be >= 1")
    v = np.asarray(values, dtype=np.float64)
    r, c = v.shape
    if (r, c) == (target_rows, target_cols):
        return v.copy()
    if r != target_rows:
        v = _interp_matrix(r, target_rows) @ v
    if c != target_cols:
        v = v @ _interp_matrix(c, target_cols).T
    return v


def resample_grid(grid: TFGrid, target_rows: int, target_cols: int) -> TFGrid:
    r, c = grid.shape
    out = resample_array(grid.values, target_rows, target_cols)
    # clip float dust; convex weights cannot create negatives
    np.maximum(out, 0.0, out=out)
    t_step = grid.time_step * (c - 1) / (target_cols - 1) if target_cols > 1 and c > 1 else grid.time_step
    f_step = grid.freq_step * (r - 1) / (target_rows - 1) if target_rows > 1 and r > 1 else grid.freq_step
    return TFGrid(out, t_step, f_step)


# --- adaptive Gabor STFT ----------------------------------------------------


def n_bins(length: int) -> int:
    return length // 2 + 1


class AstftPlan:
    """Per-signal cache of centred, energy-normalized Gaussian spectrograms.

    The ASTFT for any schedule is assembled from these by slicing each
    section's frames out of the spectrogram for that section's window
    length, so repeated evaluations (PSO) only pay for each length once.
    """

    def __init__(self, signal, hop: int = DEFAULT_HOP, sigma: float = DEFAULT_SIGMA,
                 sample_rate: float = 1.0):
        x = np.asarray(signal, dtype=np.float64)
        if x.ndim != 1 or x.size < N_SECTIONS:
            raise ValueError(f"ASTFT needs a 1-D signal of at least {N_SECTIONS} samples")
        pad = (-x.size) % N_SECTIONS
        self.signal = np.pad(x, (0, pad))
        self.hop = hop
        self.sigma = sigma
        self.sample_rate = sample_rate
        n = self.signal.size
        self.section_length = n // N_SECTIONS
        centers = np.arange(0, n, hop)
        self.n_frames = centers.size
        section_of = np.minimum(centers // self.section_length, N_SECTIONS - 1)
        self.frame_slices = []
        for s in range(N_SECTIONS):
            idx = np.nonzero(section_of == s)[0]
            self.frame_slices.append(slice(idx[0], idx[-1] + 1) if idx.size else slice(0, 0))
        self._cache: dict[int, np.ndarray] = {}

    def magnitudes(self, length: int) -> np.ndarray:
        mags = self._cache.get(length)
        if mags is None:
            win = make_window("gaussian", length, self.sigma)
            mags = np.abs(stft(self.signal, win, self.hop, center=True, normalized=True)).T
            self._cache[length] = mags
        return mags

    def grid_values(self, schedule: WindowSchedule) -> np.ndarray:
        bins = max(n_bins(L) for L in schedule)
        out = np.empty((bins, self.n_frames))
        for L, cols in zip(schedule, self.frame_slices):
            if cols.stop == cols.start:
                continue
            block = self.magnitudes(L)[:, cols]
            if block.shape[0] != bins:
                block = _interp_matrix(block.shape[0], bins) @ block
            out[:, cols] = block
        return out

    def grid(self, schedule: WindowSchedule) -> TFGrid:
        values = self.grid_values(schedule)
        freq_step = self.sample_rate / 2 / (values.shape[0] - 1)
        return TFGrid(values, self.hop / self.sample_rate, freq_step)


def astft(signal, schedule: WindowSchedule, hop: int = DEFAULT_HOP, sigma: float = DEFAULT_SIGMA,
          sample_rate: float = 1.0) -> TFGrid:
    """Gabor STFT whose window length changes per section of the signal.

    The signal is zero padded to a multiple of 16 and split into 16 equal
    sections. Frames are centred every ``hop`` samples; a frame takes the
    window length of the section its centre falls in. Each section's
    magnitude block is interpolated along frequency to the largest bin count
    in the schedule and the blocks are laid side by side in time.
    """
    if not isinstance(schedule, WindowSchedule):
        schedule = WindowSchedule(tuple(schedule))
    return AstftPlan(signal, hop, sigma, sample_rate).grid(schedule)


# --- export -----------------------------------------------------------------


def minmax_scale(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi - lo <= 0:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def write_grid_csv(grid: TFGrid, path) -> None:
    rows, cols = grid.shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rows", "cols", "time_step", "freq_step"])
        writer.writerow([rows, cols, repr(grid.time_step), repr(grid.freq_step)])
        for row in grid.values:
            writer.writerow([repr(float(v)) for v in row])


def read_grid_csv(path) -> TFGrid:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows, cols, t_step, f_step = next(reader)
        values = np.array([[float(v) for v in row] for row in reader])
    if values.shape != (int(rows), int(cols)):
        raise ValueError(f"CSV body is {values.shape}, header says {rows}x{cols}")
    return TFGrid(values, float(t_step), float(f_step))


def pgm_bytes(grid: TFGrid) -> bytes:
    """8-bit binary PGM, min-max scaled, highest frequency on the top image row."""
    scaled = np.rint(minmax_scale(grid.values) * 255).astype(np.uint8)[::-1]
    h, w = scaled.shape
    return f"P5 {w} {h} 255\n".encode("ascii") + scaled.tobytes()


def write_pgm(grid: TFGrid, path) -> None:
    Path(path).write_bytes(pgm_bytes(grid))


def read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    header, _, body = blob.partition(b"\n")
    magic, w, h, maxval = header.split()
    if magic != b"P5" or int(maxval) != 255:
        raise ValueError("not an 8-bit binary PGM")
    return np.frombuffer(body, dtype=np.uint8).reshape(int(h), int(w))
