"""Flat key=value run configuration shared by every CLI command.

Lines look like ``key = value``; blank lines and ``#`` comments are
ignored. Unknown keys and unparsable values are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .fusion import VARIANTS, FeatureConfig, ModelConfig, TrainConfig
from .pso import SwarmConfig
from .signal import CASE_I_CLASSES, CASE_II_CLASSES, FaultKind


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _name_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


# key -> (default text, parser, description)
DEFAULTS: dict[str, tuple[str, object, str]] = {
    "seed": ("0", int, "master seed for data, PSO, init and shuffling"),
    "classes": ("case1", str, "case1 (5 classes), case2 (6 classes) or a comma list of fault kinds"),
    "per_class_count": ("1000", int, "segments per class, multiple of 10"),
    "segment_length": ("1536", int, "samples per segment"),
    "segment_hop": ("0", int, "hop between segments; 0 means non-overlapping"),
    "snr_db": ("10", float, "sensor noise level of the synthetic recordings"),
    "sample_rate_hz": ("2048", float, "synthetic sample rate"),
    "mesh_freq_hz": ("200", float, "gear mesh frequency"),
    "shaft_freq_hz": ("10", float, "shaft rotation frequency"),
    "stft_hop": ("16", int, "ASTFT frame hop"),
    "gaussian_sigma": ("0.3", float, "Gaussian window width relative to the half length"),
    "pso_swarm_size": ("30", int, "particles per swarm"),
    "pso_max_iterations": ("20", int, "swarm updates per run"),
    "pso_inertia": ("0.729", float, "inertia weight"),
    "pso_cognitive": ("1.49445", float, "pull towards the particle's own best"),
    "pso_social": ("1.49445", float, "pull towards the swarm best"),
    "pso_repeats": ("10", int, "runs whose schedules are combined by mode"),
    "pso_patience": ("5", int, "stop after this many updates without improvement"),
    "pso_per_sample": ("false", _bool, "search a schedule for every sample instead of per class"),
    "dtcwt_levels": ("4", int, "wavelet decomposition depth"),
    "astft_size": ("32", int, "ASTFT image side"),
    "dtcwt_size": ("128", int, "DTCWT image side"),
    "fusion_size": ("64", int, "side of the fused feature map"),
    "branch_channels": ("4", int, "channels per input branch"),
    "fusion_channels": ("8", int, "channels after the fusion layer"),
    "stage_channels": ("8,16,16", _int_list, "widths of the three residual stages"),
    "blocks_per_stage": ("2", int, "residual blocks per stage"),
    "variant": ("fusion", str, "model used by train/eval"),
    "ablation_variants": (",".join(VARIANTS), _name_list, "variants trained by ablate"),
    "batch_size": ("32", int, "mini-batch size"),
    "epochs": ("25", int, "training epochs"),
    "learning_rate": ("1e-4", float, "Adam step size"),
    "dataset_file": ("dataset.gfd", str, "dataset path, relative to --out"),
    "cache_file": ("features.npz", str, "preprocessed image cache, relative to --out"),
    "checkpoint_file": ("model.gfnn", str, "model checkpoint, relative to --out"),
    "export_split": ("test", str, "split used by export-tf and pso-trace"),
    "export_csv": ("false", _bool, "synth also writes a CSV copy of the dataset"),
}


def parse_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


@dataclass(frozen=True)
class RunConfig:
    values: dict

    @classmethod
    def build(cls, overrides: dict[str, str] | None = None) -> "RunConfig":
        raw = {k: v[0] for k, v in DEFAULTS.items()}
        for k, v in (overrides or {}).items():
            if k not in DEFAULTS:
                raise ConfigError(f"unknown key {k!r}")
            raw[k] = str(v)
        values = {}
        for k, (_, parser, _) in DEFAULTS.items():
            try:
                values[k] = parser(raw[k])
            except ValueError as exc:
                raise ConfigError(f"bad value for {k}: {raw[k]!r} ({exc})") from None
        cfg = cls(values)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path, overrides: dict[str, str] | None = None) -> "RunConfig":
        raw = parse_text(Path(path).read_text())
        raw.update(overrides or {})
        return cls.build(raw)

    def __getitem__(self, key):
        return self.values[key]

    def validate(self) -> None:
        v = self.values
        try:
            self.class_names()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if v["variant"] not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        for name in v["ablation_variants"]:
            if name not in VARIANTS:
                raise ConfigError(f"unknown ablation variant {name!r}")
        if v["export_split"] not in ("train", "validation", "test"):
            raise ConfigError("export_split must be train, validation or test")
        if v["per_class_count"] <= 0 or v["per_class_count"] % 10:
            raise ConfigError("per_class_count must be a positive multiple of 10")
        if v["segment_length"] < 2 or v["segment_hop"] < 0:
            raise ConfigError("segment_length must be >= 2 and segment_hop >= 0")
        try:
            self.swarm()
            self.train_config()
            self.model_config(len(self.class_names()))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def class_names(self) -> tuple[str, ...]:
        c = self.values["classes"]
        if c == "case1":
            return CASE_I_CLASSES
        if c == "case2":
            return CASE_II_CLASSES
        names = _name_list(c)
        for n in names:
            FaultKind(n)
        if len(names) < 2:
            raise ValueError("need at least two classes")
        return names

    def segment_hop(self) -> int:
        return self.values["segment_hop"] or self.values["segment_length"]

    def swarm(self, seed: int | None = None) -> SwarmConfig:
        v = self.values
        return SwarmConfig(swarm_size=v["pso_swarm_size"], max_iterations=v["pso_max_iterations"],
                           inertia=v["pso_inertia"], cognitive=v["pso_cognitive"], social=v["pso_social"],
                           repeats=v["pso_repeats"], seed=v["seed"] if seed is None else seed,
                           patience=v["pso_patience"], hop=v["stft_hop"], sigma=v["gaussian_sigma"])

    def features(self) -> FeatureConfig:
        v = self.values
        return FeatureConfig(v["astft_size"], v["dtcwt_size"], v["dtcwt_levels"], v["stft_hop"], v["gaussian_sigma"])

    def model_config(self, class_count: int, variant: str | None = None) -> ModelConfig:
        v = self.values
        if len(v["stage_channels"]) != 3:
            raise ValueError("stage_channels needs three widths")
        return ModelConfig(class_count=class_count, variant=variant or v["variant"], astft_size=v["astft_size"],
                           dtcwt_size=v["dtcwt_size"], fusion_size=v["fusion_size"],
                           raw_length=v["segment_length"], branch_channels=v["branch_channels"],
                           fusion_channels=v["fusion_channels"], stage_channels=tuple(v["stage_channels"]),
                           blocks_per_stage=v["blocks_per_stage"], seed=v["seed"])

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(v["batch_size"], v["epochs"], v["learning_rate"], v["seed"])

    def to_text(self) -> str:
        lines = []
        for k, (_, parser, desc) in DEFAULTS.items():
            val = self.values[k]
            if isinstance(val, bool):
                text = "true" if val else "false"
            elif isinstance(val, tuple):
                text = ",".join(str(x) for x in val)
            else:
                text = repr(val) if isinstance(val, float) else str(val)
            lines.append(f"{k} = {text}")
        return "\n".join(lines) + "\n"


def defaults_text() -> str:
    """Documented default config, one commented line per key."""
    out = []
    for k, (default, _, desc) in DEFAULTS.items():
        out.append(f"# {desc}")
        out.append(f"{k} = {default}")
    return "\n".join(out) + "\n"
