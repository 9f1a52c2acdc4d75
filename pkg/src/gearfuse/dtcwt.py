"""1-D dual-tree complex wavelet transform (Kingsbury q-shift filter banks).

Level 1 uses the near-symmetric 13/19-tap biorthogonal pair without
decimation, so the even and odd output phases form the two trees; levels
2 and up use the 14-tap q-shift pair, whose tree-B filters are the time
reverse of tree A's (a quarter-sample delay each way). Signal ends are
handled by half-sample symmetric extension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tfa import TFGrid, resample_array

_SQRT2 = np.sqrt(2.0)

# near_sym_b, scaled by sqrt(2) so each tree is close to energy preserving
_H0O = np.array([
    -0.0017578125, 0.0, 0.022265625, -0.046875, -0.0482421875, 0.296875,
    0.55546875, 0.296875, -0.0482421875, -0.046875, 0.022265625, 0.0,
    -0.0017578125,
]) * _SQRT2
_G0O = np.array([
    7.0626395089285707e-05, 0.0, -1.3419015066964285e-03, -1.8833705357142855e-03,
    7.1568080357142846e-03, 2.3856026785714284e-02, -5.5643136160714278e-02,
    -5.1688058035714281e-02, 2.9975760323660716e-01, 5.5943080357142860e-01,
    2.9975760323660716e-01, -5.1688058035714281e-02, -5.5643136160714278e-02,
    2.3856026785714284e-02, 7.1568080357142846e-03, -1.8833705357142855e-03,
    -1.3419015066964285e-03, 0.0, 7.0626395089285707e-05,
]) / _SQRT2
_H1O = np.array([
    -7.0626395089285707e-05, 0.0, 1.3419015066964285e-03, -1.8833705357142855e-03,
    -7.1568080357142846e-03, 2.3856026785714284e-02, 5.5643136160714278e-02,
    -5.1688058035714281e-02, -2.9975760323660716e-01, 5.5943080357142860e-01,
    -2.9975760323660716e-01, -5.1688058035714281e-02, 5.5643136160714278e-02,
    2.3856026785714284e-02, -7.1568080357142846e-03, -1.8833705357142855e-03,
    1.3419015066964285e-03, 0.0, -7.0626395089285707e-05,
]) * _SQRT2
_G1O = np.array([
    -0.0017578125, -0.0, 0.022265625, 0.046875, -0.0482421875, -0.296875,
    0.55546875, -0.296875, -0.0482421875, 0.046875, 0.022265625, -0.0,
    -0.0017578125,
]) / _SQRT2

# qshift_b: one orthonormal 14-tap lowpass; everything else is derived
_QSHIFT_H0A = np.array([
    0.00325314276365318, -0.00388321199915849, 0.03466034684485349, -0.03887280126882779,
    -0.11720388769911527, 0.27529538466888204, 0.7561456438925225, 0.5688104207121227,
    0.011866092033797, -0.1067118046866654, 0.0238253847949203, 0.01702522388155399,
    -0.00543947593727412, -0.00455689562847549,
])


@dataclass(frozen=True)
class FilterBank:
    h0o: np.ndarray
    h1o: np.ndarray
    g0o: np.ndarray
    g1o: np.ndarray
    h0a: np.ndarray
    h0b: np.ndarray
    h1a: np.ndarray
    h1b: np.ndarray
    g0a: np.ndarray
    g0b: np.ndarray
    g1a: np.ndarray
    g1b: np.ndarray


def _qshift_bank(h0a: np.ndarray) -> dict[str, np.ndarray]:
    h0b = h0a[::-1].copy()
    alt = np.where(np.arange(h0a.size) % 2 == 0, -1.0, 1.0)
    h1b = alt * h0a          # h1b(z) = h0a(-z), sign-aligned with the reference tables
    h1a = h1b[::-1].copy()
    return dict(h0a=h0a, h0b=h0b, h1a=h1a, h1b=h1b,
                g0a=h0b.copy(), g0b=h0a.copy(), g1a=h1b.copy(), g1b=h1a.copy())


def default_filter_bank() -> FilterBank:
    return FilterBank(h0o=_H0O, h1o=_H1O, g0o=_G0O, g1o=_G1O, **_qshift_bank(_QSHIFT_H0A))


FILTERS = default_filter_bank()


# --- low-level filtering ----------------------------------------------------


def _reflect(idx: np.ndarray, n: int) -> np.ndarray:
    """Half-sample symmetric extension of indices into [0, n)."""
    period = 2 * n
    i = np.mod(idx, period)
    return np.where(i >= n, period - 1 - i, i)


def _colfilter(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Undecimated filtering; odd-length h keeps every output aligned with its input."""
    m2 = h.size // 2
    xe = x[_reflect(np.arange(-m2, x.size + m2), x.size)]
    return np.convolve(xe, h, mode="valid")


def _coldfilt(x: np.ndarray, ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    """Filter with ha on one phase and hb on the other, decimate by 2, interleave."""
    r = x.size
    if r % 4:
        raise ValueError("decimating stage needs a length divisible by 4")
    m = ha.size
    xe = _reflect(np.arange(-m, r + m), r)
    t = np.arange(4, r + 2 * m - 2, 4)
    y = np.zeros(r // 2)
    if np.sum(ha * hb) > 0:
        s1, s2 = slice(0, None, 2), slice(1, None, 2)
    else:
        s1, s2 = slice(1, None, 2), slice(0, None, 2)
    y[s1] = np.convolve(x[xe[t]], ha[0::2], "valid") + np.convolve(x[xe[t - 2]], ha[1::2], "valid")
    y[s2] = np.convolve(x[xe[t + 1]], hb[0::2], "valid") + np.convolve(x[xe[t - 1]], hb[1::2], "valid")
    return y


def _colifilt(x: np.ndarray, ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    """Interpolate by 2 with the paired synthesis filters (inverse of _coldfilt)."""
    r = x.size
    m = ha.size
    m2 = m // 2
    y = np.zeros(2 * r)
    if not np.any(x):
        return y
    xe = _reflect(np.arange(-m2, r + m2), r)
    hao, hae, hbo, hbe = ha[0::2], ha[1::2], hb[0::2], hb[1::2]
    s = np.arange(0, 2 * r, 4)
    if m2 % 2:
        t = np.arange(2, r + m - 1, 2)
        ta, tb = (t, t - 1) if np.sum(ha * hb) > 0 else (t - 1, t)
        y[s] = np.convolve(x[xe[tb]], hao, "valid")
        y[s + 1] = np.convolve(x[xe[ta]], hbo, "valid")
        y[s + 2] = np.convolve(x[xe[tb]], hae, "valid")
        y[s + 3] = np.convolve(x[xe[ta]], hbe, "valid")
    else:
        t = np.arange(3, r + m, 2)
        ta, tb = (t, t - 1) if np.sum(ha * hb) > 0 else (t - 1, t)
        y[s] = np.convolve(x[xe[tb - 2]], hae, "valid")
        y[s + 1] = np.convolve(x[xe[ta - 2]], hbe, "valid")
        y[s + 2] = np.convolve(x[xe[tb]], hao, "valid")
        y[s + 3] = np.convolve(x[xe[ta]], hbo, "valid")
    return y


# --- transform --------------------------------------------------------------


@dataclass(frozen=True)
class DtcwtCoeffs:
    """Complex detail bands W_A + jW_B for levels 1..S plus the final lowpass.

    ``lowpass`` interleaves the two trees (tree A on even positions).
    ``original_length`` is the input length before any symmetric padding.
    """

    highpasses: tuple[np.ndarray, ...]
    lowpass: np.ndarray
    original_length: int

    @property
    def levels(self) -> int:
        return len(self.highpasses)

    @property
    def lowpass_a(self) -> np.ndarray:
        return self.lowpass[0::2]

    @property
    def lowpass_b(self) -> np.ndarray:
        return self.lowpass[1::2]

    def scaled(self, k: float) -> "DtcwtCoeffs":
        return DtcwtCoeffs(tuple(k * h for h in self.highpasses), k * self.lowpass, self.original_length)


def padded_length(n: int, levels: int) -> int:
    step = 2**levels
    return -(-n // step) * step


def forward(signal, levels: int = 4, bank: FilterBank = FILTERS) -> DtcwtCoeffs:
    """Analyse a real 1-D signal into ``levels`` complex detail bands.

    Lengths that are not a multiple of 2**levels are first extended
    symmetrically at the end; the detail band at level s then has
    ``padded_length / 2**s`` coefficients.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward expects a 1-D signal")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    n = x.size
    if n < 2**levels or n < 2:
        raise ValueError(f"{levels} levels is too deep for a signal of {n} samples")
    n_pad = padded_length(n, levels)
    if n_pad != n:
        x = x[_reflect(np.arange(n_pad), n)]

    hi = _colfilter(x, bank.h1o)
    lo = _colfilter(x, bank.h0o)
    bands = [hi[0::2] + 1j * hi[1::2]]
    for _ in range(1, levels):
        hi = _coldfilt(lo, bank.h1b, bank.h1a)
        lo = _coldfilt(lo, bank.h0b, bank.h0a)
        bands.append(hi[0::2] + 1j * hi[1::2])
    return DtcwtCoeffs(tuple(bands), lo, n)


def _to_real(band: np.ndarray) -> np.ndarray:
    z = np.empty(2 * band.size)
    z[0::2] = band.real
    z[1::2] = band.imag
    return z


def inverse(coeffs: DtcwtCoeffs, bank: FilterBank = FILTERS) -> np.ndarray:
    levels = coeffs.levels
    if levels < 1:
        raise ValueError("no detail levels to invert")
    n_pad = 2 * coeffs.highpasses[0].size
    for s, band in enumerate(coeffs.highpasses, start=1):
        if band.size * 2**s != n_pad:
            raise ValueError(f"level {s} has {band.size} coefficients, expected {n_pad // 2**s}")
    if coeffs.lowpass.size * 2 ** (levels - 1) != n_pad:
        raise ValueError(f"lowpass has {coeffs.lowpass.size} samples, expected {n_pad // 2 ** (levels - 1)}")

    lo = np.asarray(coeffs.lowpass, dtype=np.float64)
    for level in range(levels - 1, 0, -1):
        hi = _to_real(coeffs.highpasses[level])
        lo = _colifilt(lo, bank.g0b, bank.g0a) + _colifilt(hi, bank.g1b, bank.g1a)
    hi = _to_real(coeffs.highpasses[0])
    x = _colfilter(lo, bank.g0o) + _colfilter(hi, bank.g1o)
    return x[: coeffs.original_length]


def magnitude_phase(coeffs: DtcwtCoeffs) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per level (M, theta) with M = |W_A + jW_B| and theta in (-pi, pi]; theta = 0 where M = 0."""
    out = []
    for band in coeffs.highpasses:
        mag = np.hypot(band.real, band.imag)
        theta = np.arctan2(band.imag, band.real)
        theta = np.where(theta == -np.pi, np.pi, theta)
        theta = np.where(mag == 0, 0.0, theta)
        out.append((mag, theta))
    return out


def lowpass_magnitude(coeffs: DtcwtCoeffs) -> np.ndarray:
    return np.hypot(coeffs.lowpass_a, coeffs.lowpass_b)


def level_energies(coeffs: DtcwtCoeffs) -> np.ndarray:
    return np.array([np.sum(np.abs(b) ** 2) for b in coeffs.highpasses])


def tree_a_energies(coeffs: DtcwtCoeffs) -> np.ndarray:
    """Per-level energy of tree A alone: a critically sampled real DWT with the same filters."""
    return np.array([np.sum(b.real**2) for b in coeffs.highpasses])


def scalogram_rows(coeffs: DtcwtCoeffs) -> np.ndarray:
    """Stack |W| per level, held constant over each coefficient's span.

    Row 0 is the lowpass magnitude, then levels S, S-1, ..., 1 (low to high
    frequency). Columns run over the original, unpadded time axis.
    """
    n = coeffs.original_length
    rows = [np.repeat(lowpass_magnitude(coeffs), 2**coeffs.levels)[:n]]
    for s in range(coeffs.levels, 0, -1):
        mag = np.abs(coeffs.highpasses[s - 1])
        rows.append(np.repeat(mag, 2**s)[:n])
    return np.vstack(rows)


def scalogram(coeffs: DtcwtCoeffs, target_rows: int = 128, target_cols: int = 128,
              sample_rate: float = 1.0) -> TFGrid:
    rows = scalogram_rows(coeffs)
    values = np.maximum(resample_array(rows, target_rows, target_cols), 0.0)
    t_step = (rows.shape[1] - 1) / max(target_cols - 1, 1) / sample_rate
    return TFGrid(values, t_step, 1.0)
