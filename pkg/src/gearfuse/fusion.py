"""Dual-branch fusion classifier, feature preparation, training and ablation.

Branch A lifts a 32x32 ASTFT image to 64x64 with a stride-2 transposed
convolution (32 -> 66, then a centre crop). Branch B brings a 128x128 DTCWT
scalogram down to 64x64 with a stride-2 dilated convolution. The two maps
are concatenated on channels, mixed by a 1x1 convolution, pooled to 32x32
and passed through a residual trunk whose last stage trades its stride for
dilation. Global average pooling, a batch norm over the pooled features and
a 1x1 classifier give the logits.
"""

from __future__ import annotations

import csv
import io
import time
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import dtcwt as dt
from . import nn
from .nn import functional as F
from .tfa import DEFAULT_HOP, DEFAULT_SIGMA, AstftPlan, WindowSchedule, minmax_scale, resample_array

VARIANTS = ("fusion", "single_astft", "single_dtcwt", "raw_V", "raw_H")


@dataclass(frozen=True)
class ModelConfig:
    class_count: int
    variant: str = "fusion"
    astft_size: int = 32
    dtcwt_size: int = 128
    fusion_size: int = 64
    raw_length: int = 1536
    branch_channels: int = 4
    fusion_channels: int = 8
    stage_channels: tuple[int, int, int] = (8, 16, 16)
    blocks_per_stage: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if len(self.stage_channels) != 3:
            raise ValueError("stage_channels needs three widths")
        if self.blocks_per_stage < 1:
            raise ValueError("blocks_per_stage must be >= 1")

    def to_ints(self) -> list[int]:
        return [self.class_count, VARIANTS.index(self.variant), self.astft_size, self.dtcwt_size,
                self.fusion_size, self.raw_length, self.branch_channels, self.fusion_channels,
                *self.stage_channels, self.blocks_per_stage, self.seed]

    @classmethod
    def from_ints(cls, ints) -> "ModelConfig":
        v = [int(i) for i in ints]
        return cls(class_count=v[0], variant=VARIANTS[v[1]], astft_size=v[2], dtcwt_size=v[3],
                   fusion_size=v[4], raw_length=v[5], branch_channels=v[6], fusion_channels=v[7],
                   stage_channels=(v[8], v[9], v[10]), blocks_per_stage=v[11], seed=v[12])


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 25
    learning_rate: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


class GeometryError(ValueError):
    pass


def branch_sizes(cfg: ModelConfig) -> dict[str, list[int]]:
    """Spatial size after each resampling step of both branches."""
    up = F.deconv_output_size(cfg.astft_size, 4, 2)
    down = F.conv_output_size(cfg.dtcwt_size, 3, 2, 2, 1)
    return {"astft": [cfg.astft_size, up, cfg.fusion_size], "dtcwt": [cfg.dtcwt_size, down]}


def check_geometry(cfg: ModelConfig) -> None:
    if cfg.variant.startswith("raw"):
        return
    sizes = branch_sizes(cfg)
    up = sizes["astft"][1]
    down = sizes["dtcwt"][1]
    if up < cfg.fusion_size:
        raise GeometryError(f"ASTFT branch reaches {cfg.astft_size} -> {up}, "
                            f"smaller than the fusion size {cfg.fusion_size}")
    if down != cfg.fusion_size:
        raise GeometryError(f"DTCWT branch reaches {cfg.dtcwt_size} -> {down}, "
                            f"fusion size is {cfg.fusion_size}")
    if cfg.fusion_size % 2:
        raise GeometryError(f"fusion size {cfg.fusion_size} must be even for the 2x2 pool")


class GearNet(nn.Module):
    """All five variants share the trunk and head; they differ in the front end."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        check_geometry(cfg)
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        cb, cf = cfg.branch_channels, cfg.fusion_channels
        c1, c2, c3 = cfg.stage_channels
        self.raw = cfg.variant.startswith("raw")
        k = (1, 3) if self.raw else (3, 3)
        pad = (0, 1) if self.raw else (1, 1)
        down = (1, 2) if self.raw else (2, 2)
        dil = (1, 2) if self.raw else (2, 2)

        self.branch_a = self.branch_b = None
        if cfg.variant in ("fusion", "single_astft"):
            self.branch_a = nn.Sequential(
                nn.ConvTranspose2d(1, cb, 4, 2, rng=rng),
                nn.CenterCrop(cfg.fusion_size, cfg.fusion_size),
                nn.BatchNorm2d(cb), nn.ReLU())
        if cfg.variant in ("fusion", "single_dtcwt"):
            self.branch_b = nn.Sequential(
                nn.Conv2d(1, cb, 3, stride=2, dilation=2, padding=1, rng=rng),
                nn.BatchNorm2d(cb), nn.ReLU())
        if self.raw:
            # the 1xL row plays the role of the branch output
            fuse_in, fuse_k, fuse_pad = 1, k, pad
        else:
            fuse_in = cb * (2 if cfg.variant == "fusion" else 1)
            fuse_k, fuse_pad = 1, 0
        self.fuse = nn.Sequential(
            nn.Conv2d(fuse_in, cf, fuse_k, padding=fuse_pad, rng=rng),
            nn.BatchNorm2d(cf), nn.ReLU(), nn.MaxPool2d(down))

        blocks: list[nn.Module] = [nn.Conv2d(cf, c1, k, padding=pad, bias=False, rng=rng),
                                   nn.BatchNorm2d(c1), nn.ReLU()]
        n = cfg.blocks_per_stage
        blocks += [nn.ResidualBlock(c1, c1, kernel=k, rng=rng) for _ in range(n)]
        blocks += [nn.ResidualBlock(c1 if i == 0 else c2, c2, stride=down if i == 0 else 1, kernel=k, rng=rng)
                   for i in range(n)]
        blocks += [nn.ResidualBlock(c2 if i == 0 else c3, c3, dilation=dil, kernel=k, rng=rng)
                   for i in range(n)]
        self.trunk = nn.Sequential(*blocks)
        # pooled features are batch-normalized so the classifier sees unit-scale
        # inputs; its small init keeps the untrained softmax close to uniform
        self.pool = nn.GlobalAvgPool()
        self.head_norm = nn.BatchNorm2d(c3)
        self.classifier = nn.Conv2d(c3, cfg.class_count, 1, rng=rng, init_scale=1e-2)

    def children(self):
        out = [m for m in (self.branch_a, self.branch_b) if m is not None]
        return out + [self.fuse, self.trunk, self.pool, self.head_norm, self.classifier]

    def forward(self, inputs):
        if not isinstance(inputs, tuple):
            inputs = (inputs,)
        if self.branch_a is not None and self.branch_b is not None:
            a, b = inputs
            fa, fb = self.branch_a(a), self.branch_b(b)
            self._split = fa.shape[1]
            z = np.concatenate([fa, fb], axis=1)
        elif self.branch_a is not None:
            z = self.branch_a(inputs[0])
        elif self.branch_b is not None:
            z = self.branch_b(inputs[0])
        else:
            z = inputs[0]
        z = self.trunk(self.fuse(z))
        self.feature_shape = z.shape
        g = self.head_norm(self.pool(z)[:, :, None, None])
        return self.classifier(g)[:, :, 0, 0]

    def backward(self, dlogits):
        d = self.classifier.backward(dlogits[:, :, None, None])
        d = self.pool.backward(self.head_norm.backward(d)[:, :, 0, 0])
        d = self.fuse.backward(self.trunk.backward(d))
        if self.branch_a is not None and self.branch_b is not None:
            return (self.branch_a.backward(d[:, : self._split]), self.branch_b.backward(d[:, self._split:]))
        if self.branch_a is not None:
            return self.branch_a.backward(d)
        if self.branch_b is not None:
            return self.branch_b.backward(d)
        return d

    def n_parameters(self) -> int:
        return int(sum(p.value.size for p in self.parameters()))


def build_model(cfg: ModelConfig) -> GearNet:
    return GearNet(cfg)


def save_model(model: GearNet, path) -> None:
    nn.save_checkpoint(model, path, model.cfg.to_ints())


def load_model(path) -> GearNet:
    blob = Path(path).read_bytes()
    cfg = ModelConfig.from_ints(nn.checkpoint.read_config(blob))
    model = build_model(cfg)
    nn.load_into(model, blob)
    return model.eval()


# --- features ---------------------------------------------------------------


@dataclass(frozen=True)
class FeatureConfig:
    astft_size: int = 32
    dtcwt_size: int = 128
    dtcwt_levels: int = 4
    hop: int = DEFAULT_HOP
    sigma: float = DEFAULT_SIGMA


@dataclass
class FeatureSet:
    """Model inputs for one split. Images are min-max scaled to [0, 1]."""

    astft: np.ndarray          # (n, astft_size, astft_size) float32, from channel V
    dtcwt: np.ndarray          # (n, dtcwt_size, dtcwt_size) float32, from channel H
    raw_h: np.ndarray          # (n, L) float32
    raw_v: np.ndarray          # (n, L) float32
    labels: np.ndarray         # (n,) int64

    def __len__(self) -> int:
        return int(self.labels.size)

    def take(self, idx) -> "FeatureSet":
        return FeatureSet(self.astft[idx], self.dtcwt[idx], self.raw_h[idx], self.raw_v[idx], self.labels[idx])

    def inputs(self, variant: str, idx=None):
        """Float64 NCHW model inputs for the given variant (and optional sample indices)."""
        sel = slice(None) if idx is None else idx

        def img(a):
            return a[sel][:, None].astype(np.float64)

        if variant == "fusion":
            return (img(self.astft), img(self.dtcwt))
        if variant == "single_astft":
            return img(self.astft)
        if variant == "single_dtcwt":
            return img(self.dtcwt)
        raw = self.raw_v if variant == "raw_V" else self.raw_h
        return raw[sel][:, None, None, :].astype(np.float64)


def astft_image(v: np.ndarray, schedule: WindowSchedule, fcfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    grid = AstftPlan(v, fcfg.hop, fcfg.sigma).grid_values(schedule)
    return minmax_scale(np.maximum(resample_array(grid, fcfg.astft_size, fcfg.astft_size), 0.0))


def dtcwt_image(h: np.ndarray, fcfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    coeffs = dt.forward(h, fcfg.dtcwt_levels)
    return minmax_scale(dt.scalogram(coeffs, fcfg.dtcwt_size, fcfg.dtcwt_size).values)


def _one_sample(args):
    h, v, schedule, fcfg = args
    return astft_image(v, schedule, fcfg), dtcwt_image(h, fcfg)


def prepare_features(h: np.ndarray, v: np.ndarray, labels: np.ndarray, schedule: WindowSchedule,
                     fcfg: FeatureConfig = FeatureConfig(), workers: int = 1) -> FeatureSet:
    """ASTFT image of channel V and DTCWT image of channel H for every sample."""
    n = len(labels)
    jobs = [(np.asarray(h[i], np.float64), np.asarray(v[i], np.float64), schedule, fcfg) for i in range(n)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(_one_sample, jobs))
    else:
        results = [_one_sample(j) for j in jobs]
    a = np.zeros((n, fcfg.astft_size, fcfg.astft_size), np.float32)
    d = np.zeros((n, fcfg.dtcwt_size, fcfg.dtcwt_size), np.float32)
    for i, (ai, di) in enumerate(results):
        a[i], d[i] = ai, di
    return FeatureSet(a, d, np.asarray(h, np.float32), np.asarray(v, np.float32), np.asarray(labels, np.int64))


def save_features(sets: dict[str, FeatureSet], path, **extra) -> None:
    arrays = {}
    for name, fs in sets.items():
        for key in ("astft", "dtcwt", "raw_h", "raw_v", "labels"):
            arrays[f"{name}_{key}"] = getattr(fs, key)
    for k, v in extra.items():
        arrays[k] = np.asarray(v)
    write_npz(path, arrays)


def write_npz(path, arrays: dict[str, np.ndarray]) -> None:
    """``np.savez`` layout with fixed entry timestamps, so equal arrays give equal bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
            zf.writestr(info, buf.getvalue())


def load_features(path) -> tuple[dict[str, FeatureSet], dict[str, np.ndarray]]:
    with np.load(path) as z:
        data = {k: z[k] for k in z.files}
    sets, extra = {}, {}
    names = sorted({k.rsplit("_", 1)[0] for k in data if k.endswith("_labels")})
    for name in names:
        sets[name] = FeatureSet(*(data.pop(f"{name}_{key}") for key in ("astft", "dtcwt", "raw_h", "raw_v", "labels")))
    extra.update(data)
    return sets, extra


# --- training and evaluation ------------------------------------------------


@dataclass
class EvalResult:
    loss: float
    accuracy: float
    confusion: np.ndarray
    predictions: np.ndarray


@dataclass
class Metrics:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    confusion: np.ndarray | None = None
    test_accuracy: float | None = None
    seconds: float = 0.0
    first_batch_loss: float | None = None

    @property
    def epochs(self) -> int:
        return len(self.train_loss)


def confusion_matrix(labels, predictions, k: int) -> np.ndarray:
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels), np.asarray(predictions)), 1)
    return cm


def predict_logits(model: GearNet, feats: FeatureSet, batch_size: int = 128) -> np.ndarray:
    was_training = model.training
    model.eval()
    out = []
    for s in range(0, len(feats), batch_size):
        idx = np.arange(s, min(s + batch_size, len(feats)))
        out.append(model.forward(feats.inputs(model.cfg.variant, idx)))
    model.train(was_training)
    return np.concatenate(out, axis=0)


def evaluate(model: GearNet, feats: FeatureSet, batch_size: int = 128) -> EvalResult:
    """Inference pass with running BN statistics; parameters are not touched."""
    logits = predict_logits(model, feats, batch_size)
    _, loss, _ = F.softmax_xent(logits, feats.labels)
    pred = logits.argmax(axis=1)
    cm = confusion_matrix(feats.labels, pred, model.cfg.class_count)
    return EvalResult(loss, float(np.trace(cm) / cm.sum()), cm, pred)


def _batches(order: np.ndarray, size: int) -> list[np.ndarray]:
    # a lone trailing sample would leave batch norm with zero variance
    out = [order[s: s + size] for s in range(0, order.size, size)]
    if len(out) > 1 and out[-1].size == 1:
        last = out.pop()
        out[-1] = np.concatenate([out[-1], last])
    return out


def train(model: GearNet, train_set: FeatureSet, val_set: FeatureSet, config: TrainConfig = TrainConfig(),
          log=None) -> Metrics:
    """Mini-batch Adam over a seeded shuffle; validates after every epoch."""
    if len(train_set) < 2 or len(val_set) == 0:
        raise ValueError("need at least two training samples and a nonempty validation split")
    k = model.cfg.class_count
    for fs in (train_set, val_set):
        if fs.labels.max() >= k:
            raise ValueError(f"labels reach {int(fs.labels.max())} but the model has {k} classes")
    rng = np.random.default_rng(config.seed)
    opt = nn.Adam(model.parameters(), lr=config.learning_rate)
    metrics = Metrics()
    t0 = time.perf_counter()
    n = len(train_set)
    variant = model.cfg.variant
    for epoch in range(config.epochs):
        model.train()
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for idx in _batches(order, config.batch_size):
            logits = model.forward(train_set.inputs(variant, idx))
            _, loss, grad = F.softmax_xent(logits, train_set.labels[idx])
            if metrics.first_batch_loss is None:
                metrics.first_batch_loss = loss
            model.backward(grad)
            opt.step()
            loss_sum += loss * idx.size
            correct += int((logits.argmax(axis=1) == train_set.labels[idx]).sum())
        val = evaluate(model, val_set)
        metrics.train_loss.append(loss_sum / n)
        metrics.train_acc.append(correct / n)
        metrics.val_loss.append(val.loss)
        metrics.val_acc.append(val.accuracy)
        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs} train_loss={loss_sum / n:.4f} "
                f"train_acc={correct / n:.4f} val_loss={val.loss:.4f} val_acc={val.accuracy:.4f}")
    metrics.seconds = time.perf_counter() - t0
    return metrics


def fit_and_test(cfg: ModelConfig, sets: dict[str, FeatureSet], tcfg: TrainConfig, log=None):
    t0 = time.perf_counter()
    model = build_model(cfg)
    metrics = train(model, sets["train"], sets["validation"], tcfg, log)
    result = evaluate(model, sets["test"])
    metrics.confusion = result.confusion
    metrics.test_accuracy = result.accuracy
    metrics.seconds = time.perf_counter() - t0
    return model, metrics


def run_ablation(sets: dict[str, FeatureSet], class_count: int, tcfg: TrainConfig = TrainConfig(),
                 base: ModelConfig | None = None, variants=VARIANTS, log=None) -> list[dict]:
    """Train every variant with the same seeds; returns rows {variant, accuracy, seconds}."""
    base = base or ModelConfig(class_count)
    rows = []
    for v in variants:
        cfg = ModelConfig(**{**asdict(base), "variant": v, "class_count": class_count,
                             "stage_channels": tuple(base.stage_channels)})
        _, m = fit_and_test(cfg, sets, tcfg, log)
        rows.append({"variant": v, "accuracy": m.test_accuracy, "seconds": m.seconds})
    return rows


# --- CSV output -------------------------------------------------------------


def write_curves_csv(metrics: Metrics, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
        for i in range(metrics.epochs):
            w.writerow([i + 1, repr(metrics.train_loss[i]), repr(metrics.val_loss[i]),
                        repr(metrics.train_acc[i]), repr(metrics.val_acc[i])])


def write_confusion_csv(cm: np.ndarray, path, class_names=None) -> None:
    k = cm.shape[0]
    names = list(class_names) if class_names is not None else [str(i) for i in range(k)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred"] + names)
        for i in range(k):
            w.writerow([names[i]] + [int(v) for v in cm[i]])


def write_ablation_csv(rows, path, include_time: bool = True) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "accuracy", "seconds"] if include_time else ["variant", "accuracy"])
        for r in rows:
            vals = [r["variant"], repr(float(r["accuracy"]))]
            if include_time:
                vals.append(f"{r['seconds']:.3f}")
            w.writerow(vals)
