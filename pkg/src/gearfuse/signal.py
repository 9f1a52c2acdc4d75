"""Raw vibration handling: segmentation, normalization, synthetic gear faults
and the binary dataset container."""

from __future__ import annotations

import csv
import enum
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_SAMPLE_RATE = 2048.0
DEFAULT_SHAFT_HZ = 10.0
DEFAULT_MESH_HZ = 200.0

CASE_I_CLASSES = ("healthy", "broken_tooth", "wear", "crack", "missing_tooth")
CASE_II_CLASSES = ("healthy", "wear", "broken_tooth", "missing_tooth", "crack", "eccentric")


class FaultKind(str, enum.Enum):
    HEALTHY = "healthy"
    BROKEN_TOOTH = "broken_tooth"
    WEAR = "wear"
    CRACK = "crack"
    MISSING_TOOTH = "missing_tooth"
    ECCENTRIC = "eccentric"


class Channel(str, enum.Enum):
    H = "H"
    V = "V"


@dataclass(frozen=True)
class TimeSeries:
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("TimeSeries needs a nonempty 1-D sample array")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class SegmentSpec:
    length: int
    hop: int

    def __post_init__(self):
        if self.length < 2:
            raise ValueError(f"segment length must be >= 2, got {self.length}")
        if self.hop < 1:
            raise ValueError(f"hop must be >= 1, got {self.hop}")


@dataclass(frozen=True)
class LabeledSegment:
    samples: np.ndarray
    label: int
    channel: Channel


@dataclass(frozen=True)
class SyntheticFaultSpec:
    class_kind: FaultKind
    mesh_freq_hz: float = DEFAULT_MESH_HZ
    shaft_freq_hz: float = DEFAULT_SHAFT_HZ
    snr_db: float = 10.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "class_kind", FaultKind(self.class_kind))
        if not (self.mesh_freq_hz > self.shaft_freq_hz > 0):
            raise ValueError(
                f"need mesh_freq_hz > shaft_freq_hz > 0, got {self.mesh_freq_hz}, {self.shaft_freq_hz}"
            )


def segment(series: TimeSeries | np.ndarray, spec: SegmentSpec) -> list[np.ndarray]:
    """Cut a series into ``floor((N - length) / hop) + 1`` fixed-length windows."""
    x = series.samples if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    n = x.size
    if n < spec.length:
        raise ValueError(f"series of {n} samples is shorter than segment length {spec.length}")
    count = (n - spec.length) // spec.hop + 1
    return [x[i * spec.hop : i * spec.hop + spec.length].copy() for i in range(count)]


def normalize(segment: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Per-segment z-score; constant input maps to zeros."""
    x = np.asarray(segment, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot normalize an empty segment")
    centered = x - x.mean()
    std = np.sqrt(np.mean(centered**2))
    if std <= eps * max(1.0, np.abs(x).max()):
        return np.zeros_like(x)
    return centered / std


# --- synthetic gearbox vibration -------------------------------------------

_MESH_HARMONICS = (1.0, 0.5, 0.25)
_IMPULSE_AMPLITUDE = {FaultKind.BROKEN_TOOTH: 6.0, FaultKind.MISSING_TOOTH: 12.0}
_CRACK_AM_DEPTH = 0.5
_CRACK_PM_DEPTH = 0.5
_WEAR_RMS = 0.5
_ECCENTRIC_AMPLITUDE = 1.0


def _event_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 0]))


def _noise_rng(seed: int, channel: Channel) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 1 if channel is Channel.H else 2]))


def _band_noise(rng: np.random.Generator, n: int, fs: float, lo_hz: float, hi_hz: float) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    spectrum[(freqs < lo_hz) | (freqs > hi_hz)] = 0.0
    band = np.fft.irfft(spectrum, n)
    rms = np.sqrt(np.mean(band**2))
    return band / rms if rms > 0 else band


def synthesize(
    spec: SyntheticFaultSpec,
    duration_samples: int,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE,
    channel: Channel | str = Channel.H,
) -> TimeSeries:
    """Synthesize one accelerometer channel of a gearbox running with a given fault.

    The fault event (shaft angle, modulation phases, impulse positions and wear
    texture) depends only on ``spec.seed``; the additive sensor noise also
    depends on the channel, and channel V sees the mesh carrier 90 degrees
    ahead of channel H.
    """
    channel = Channel(channel)
    fs = float(sample_rate_hz)
    f_mesh, f_shaft = spec.mesh_freq_hz, spec.shaft_freq_hz
    if duration_samples < 2 * fs / f_mesh:
        raise ValueError("duration must cover at least two mesh periods")
    if 3 * f_mesh >= fs / 2:
        raise ValueError("mesh harmonics must stay below Nyquist")

    n = int(duration_samples)
    t = np.arange(n) / fs
    rng = _event_rng(spec.seed)
    mesh_phases = rng.uniform(0, 2 * np.pi, len(_MESH_HARMONICS))
    shaft_offset = rng.uniform(0, 1.0 / f_shaft)
    mod_phase = rng.uniform(0, 2 * np.pi)
    carrier_shift = np.pi / 2 if channel is Channel.V else 0.0
    kind = spec.class_kind

    am = np.ones(n)
    pm = np.zeros(n)
    if kind is FaultKind.CRACK:
        am = 1.0 + _CRACK_AM_DEPTH * np.cos(2 * np.pi * f_shaft * t + mod_phase)
        pm = _CRACK_PM_DEPTH * np.sin(2 * np.pi * f_shaft * t + mod_phase)

    clean = np.zeros(n)
    for h, (amp, phi) in enumerate(zip(_MESH_HARMONICS, mesh_phases), start=1):
        clean += amp * np.cos(2 * np.pi * h * f_mesh * t + h * pm + phi + carrier_shift)
    clean *= am

    if kind in _IMPULSE_AMPLITUDE:
        # once-per-revolution ringing at 4x mesh, decay = 1% of shaft period
        tau = 0.01 / f_shaft
        f_ring = 4 * f_mesh
        if f_ring >= fs / 2:
            f_ring = 0.45 * fs
        ringing = np.zeros(n)
        span = int(np.ceil(40 * tau * fs))      # exp(-40) is below float resolution
        for t0 in np.arange(shaft_offset - 1.0 / f_shaft, t[-1] + 1e-12, 1.0 / f_shaft):
            first = max(0, int(np.ceil(t0 * fs - 1e-9)))
            stop = min(n, first + span)
            if stop <= first:
                continue
            dt = t[first:stop] - t0
            ringing[first:stop] += np.exp(-dt / tau) * np.sin(2 * np.pi * f_ring * dt)
        clean += _IMPULSE_AMPLITUDE[kind] * ringing
    elif kind is FaultKind.WEAR:
        clean += _WEAR_RMS * _band_noise(rng, n, fs, 3 * f_mesh, 0.95 * fs / 2)
    elif kind is FaultKind.ECCENTRIC:
        clean += _ECCENTRIC_AMPLITUDE * np.cos(2 * np.pi * f_shaft * t + mod_phase)

    noise_power = np.mean(clean**2) / 10 ** (spec.snr_db / 10)
    noisy = clean + np.sqrt(noise_power) * _noise_rng(spec.seed, channel).standard_normal(n)
    return TimeSeries(noisy, fs)


# --- datasets ---------------------------------------------------------------


@dataclass
class Subset:
    """Paired H/V segments of one split, stored as float32 arrays."""

    h: np.ndarray
    v: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.h = np.ascontiguousarray(self.h, dtype=np.float32)
        self.v = np.ascontiguousarray(self.v, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if not (self.h.shape == self.v.shape and self.h.shape[0] == self.labels.size):
            raise ValueError("H, V and label arrays disagree in shape")

    def __len__(self) -> int:
        return self.labels.size

    def pairs(self):
        for h, v, y in zip(self.h, self.v, self.labels):
            yield (
                LabeledSegment(h.astype(np.float64), int(y), Channel.H),
                LabeledSegment(v.astype(np.float64), int(y), Channel.V),
            )

    def __eq__(self, other):
        return (
            isinstance(other, Subset)
            and np.array_equal(self.h, other.h)
            and np.array_equal(self.v, other.v)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass
class DatasetSplit:
    train: Subset
    validation: Subset
    test: Subset
    class_names: tuple[str, ...] = field(default_factory=tuple)

    @property
    def segment_length(self) -> int:
        return self.train.h.shape[1]

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    def splits(self):
        return {"train": self.train, "validation": self.validation, "test": self.test}


def split_counts(per_class_count: int) -> tuple[int, int, int]:
    if per_class_count <= 0 or per_class_count % 10:
        raise ValueError(f"per-class count must be a positive multiple of 10, got {per_class_count}")
    unit = per_class_count // 10
    return 6 * unit, 2 * unit, 2 * unit


def build_dataset(
    per_class_count: int,
    classes=CASE_I_CLASSES,
    spec: SegmentSpec | int = 1536,
    seed: int = 0,
    *,
    snr_db: float = 10.0,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE,
    mesh_freq_hz: float = DEFAULT_MESH_HZ,
    shaft_freq_hz: float = DEFAULT_SHAFT_HZ,
) -> DatasetSplit:
    """Record one long synthetic run per class and cut it into a 6:2:2 split.

    Each class gets a continuous H/V recording of ``per_class_count`` segment
    lengths, which is segmented, z-scored per segment and shuffled before the
    stratified split.
    """
    if isinstance(spec, int):
        spec = SegmentSpec(spec, spec)
    n_train, n_val, n_test = split_counts(per_class_count)
    classes = tuple(FaultKind(c).value for c in classes)
    root = np.random.SeedSequence(seed)
    class_seeds = root.spawn(len(classes))

    parts = {"train": [], "validation": [], "test": []}
    for label, (kind, ss) in enumerate(zip(classes, class_seeds)):
        event_seed, perm_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        fault = SyntheticFaultSpec(kind, mesh_freq_hz, shaft_freq_hz, snr_db, event_seed)
        duration = spec.length + (per_class_count - 1) * spec.hop
        rec = {
            ch: segment(synthesize(fault, duration, sample_rate_hz, ch), spec)
            for ch in (Channel.H, Channel.V)
        }
        h = np.stack([normalize(s) for s in rec[Channel.H]])
        v = np.stack([normalize(s) for s in rec[Channel.V]])
        order = np.random.default_rng(perm_seed).permutation(per_class_count)
        bounds = {"train": (0, n_train), "validation": (n_train, n_train + n_val),
                  "test": (n_train + n_val, per_class_count)}
        for name, (a, b) in bounds.items():
            idx = order[a:b]
            parts[name].append((h[idx], v[idx], np.full(idx.size, label)))

    def gather(name):
        hs, vs, ys = zip(*parts[name])
        return Subset(np.concatenate(hs), np.concatenate(vs), np.concatenate(ys))

    return DatasetSplit(gather("train"), gather("validation"), gather("test"), classes)


# --- GFD1 binary format -----------------------------------------------------

MAGIC = b"GFD1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIII")


class DatasetFormatError(ValueError):
    """Base class for dataset file problems."""


class BadMagicError(DatasetFormatError):
    pass


class UnexpectedEndError(DatasetFormatError):
    pass


class VersionMismatchError(DatasetFormatError):
    pass


def dataset_bytes(ds: DatasetSplit) -> bytes:
    length = ds.segment_length
    counts = [len(s) for s in (ds.train, ds.validation, ds.test)]
    out = io.BytesIO()
    out.write(_HEADER.pack(MAGIC, FORMAT_VERSION, ds.class_count, length, *counts))
    record = np.dtype([("label", "<u4"), ("h", "<f4", (length,)), ("v", "<f4", (length,))])
    for sub in (ds.train, ds.validation, ds.test):
        rows = np.empty(len(sub), dtype=record)
        rows["label"] = sub.labels
        rows["h"] = sub.h
        rows["v"] = sub.v
        out.write(rows.tobytes())
    # trailer: class names, newline separated
    names = "\n".join(ds.class_names).encode("utf-8")
    out.write(struct.pack("<I", len(names)))
    out.write(names)
    return out.getvalue()


def save_dataset(ds: DatasetSplit, path) -> None:
    Path(path).write_bytes(dataset_bytes(ds))


def parse_dataset(blob: bytes) -> DatasetSplit:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < _HEADER.size:
        raise UnexpectedEndError("unexpected end of file inside header")
    _, version, class_count, length, *counts = _HEADER.unpack_from(blob, 0)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"version mismatch: file has {version}, reader supports {FORMAT_VERSION}")
    record = np.dtype([("label", "<u4"), ("h", "<f4", (length,)), ("v", "<f4", (length,))])
    offset = _HEADER.size
    subsets = []
    for count in counts:
        nbytes = count * record.itemsize
        if offset + nbytes > len(blob):
            raise UnexpectedEndError("unexpected end of file inside sample records")
        rows = np.frombuffer(blob, dtype=record, count=count, offset=offset)
        subsets.append(Subset(rows["h"], rows["v"], rows["label"].astype(np.int64)))
        offset += nbytes
    if offset + 4 > len(blob):
        raise UnexpectedEndError("unexpected end of file before class-name trailer")
    (name_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if offset + name_len > len(blob):
        raise UnexpectedEndError("unexpected end of file inside class-name trailer")
    text = blob[offset : offset + name_len].decode("utf-8")
    names = tuple(text.split("\n")) if text else tuple(f"class{i}" for i in range(class_count))
    if len(names) != class_count:
        raise DatasetFormatError(f"header says {class_count} classes, trailer names {len(names)}")
    return DatasetSplit(*subsets, class_names=names)


def load_dataset(path) -> DatasetSplit:
    return parse_dataset(Path(path).read_bytes())


def export_csv(ds: DatasetSplit, path) -> None:
    """One row per sample: split, label, then the H samples followed by the V samples."""
    length = ds.segment_length
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["split", "label"] + [f"h{i}" for i in range(length)] + [f"v{i}" for i in range(length)])
        for name, sub in ds.splits().items():
            for h, v, y in zip(sub.h, sub.v, sub.labels):
                writer.writerow([name, int(y)] + [repr(float(a)) for a in h] + [repr(float(a)) for a in v])
