"""``gearfuse`` command line: synth -> preprocess -> train/eval/ablate -> export.

Every command reads a flat ``key = value`` config (``--config``), applies
``--seed`` on top, writes its outputs under ``--out`` and echoes the
resolved config there as ``config_<command>.txt``.

Exit codes: 0 success, 2 validation failure, 1 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import zipfile
from pathlib import Path

import numpy as np

from . import fusion as fu
from . import pso
from .config import ConfigError, RunConfig, defaults_text
from .nn.checkpoint import CheckpointError
from .pipeline import build_features, build_features_per_sample, search_schedule
from .signal import SegmentSpec, build_dataset, export_csv, load_dataset, save_dataset
from .tfa import TFGrid, write_grid_csv, write_pgm

log = logging.getLogger("gearfuse")

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2


class UsageError(ValueError):
    pass


def worker_count() -> int:
    """Threads for per-sample work; GEARFUSE_THREADS caps it (default 1)."""
    raw = os.environ.get("GEARFUSE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"GEARFUSE_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(n, os.cpu_count() or 1))


def _path(cfg: RunConfig, out: Path, key: str) -> Path:
    p = Path(cfg[key])
    return p if p.is_absolute() else out / p


def _echo(cfg: RunConfig, out: Path, command: str) -> None:
    (out / f"config_{command}.txt").write_text(cfg.to_text())


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _load_cache(cfg: RunConfig, out: Path):
    sets, extra = fu.load_features(_path(cfg, out, "cache_file"))
    if set(sets) != {"train", "validation", "test"}:
        raise UsageError("feature cache must hold train, validation and test splits")
    names = tuple(str(s) for s in extra.get("class_names", ()))
    if not names:
        names = tuple(f"class{i}" for i in range(int(sets["train"].labels.max()) + 1))
    return sets, names


# --- commands ---------------------------------------------------------------


def cmd_synth(cfg: RunConfig, out: Path, args) -> None:
    spec = SegmentSpec(cfg["segment_length"], cfg.segment_hop())
    ds = build_dataset(cfg["per_class_count"], cfg.class_names(), spec, cfg["seed"], snr_db=cfg["snr_db"],
                       sample_rate_hz=cfg["sample_rate_hz"], mesh_freq_hz=cfg["mesh_freq_hz"],
                       shaft_freq_hz=cfg["shaft_freq_hz"])
    path = _path(cfg, out, "dataset_file")
    save_dataset(ds, path)
    if cfg["export_csv"]:
        export_csv(ds, path.with_suffix(".csv"))
    log.info("wrote %d samples (%d classes) to %s", len(ds.train) + len(ds.validation) + len(ds.test),
             ds.class_count, path)


def cmd_preprocess(cfg: RunConfig, out: Path, args) -> None:
    ds = load_dataset(_path(cfg, out, "dataset_file"))
    fcfg = cfg.features()
    if cfg["pso_per_sample"]:
        sets = build_features_per_sample(ds, cfg.swarm(), fcfg)
        lines = ["per_sample"]
        pooled = None
    else:
        search = search_schedule(ds, cfg.swarm())
        lines = [f"pooled,{pso.schedule_text(search.pooled)}"]
        lines += [f"{name},{pso.schedule_text(s)}" for name, s in zip(ds.class_names, search.class_schedules)]
        pooled = search.pooled
        log.info("pooled schedule %s", pso.schedule_text(pooled))
        sets = build_features(ds, pooled, fcfg, worker_count())
    (out / "schedule.txt").write_text("\n".join(lines) + "\n")
    extra = {"class_names": np.array(ds.class_names)}
    if pooled is not None:
        extra["schedule"] = np.array(pooled.lengths, dtype=np.int64)
    fu.save_features(sets, _path(cfg, out, "cache_file"), **extra)
    log.info("cached %d samples", sum(len(s) for s in sets.values()))


def _train_one(cfg: RunConfig, sets, names, variant: str):
    mcfg = cfg.model_config(len(names), variant)
    return fu.fit_and_test(mcfg, sets, cfg.train_config(), log.info)


def cmd_train(cfg: RunConfig, out: Path, args) -> None:
    sets, names = _load_cache(cfg, out)
    model, m = _train_one(cfg, sets, names, cfg["variant"])
    fu.save_model(model, _path(cfg, out, "checkpoint_file"))
    fu.write_curves_csv(m, out / "curves.csv")
    fu.write_confusion_csv(m.confusion, out / "confusion.csv", names)
    _write_rows(out / "metrics.csv", ["variant", "test_accuracy", "epochs", "parameters", "first_batch_loss"],
                [[cfg["variant"], repr(m.test_accuracy), m.epochs, model.n_parameters(), repr(m.first_batch_loss)]])
    _write_rows(out / "timing.csv", ["variant", "seconds"], [[cfg["variant"], f"{m.seconds:.3f}"]])
    log.info("test accuracy %.4f", m.test_accuracy)


def cmd_eval(cfg: RunConfig, out: Path, args) -> None:
    sets, names = _load_cache(cfg, out)
    model = fu.load_model(_path(cfg, out, "checkpoint_file"))
    if model.cfg.class_count != len(names):
        raise UsageError(f"checkpoint has {model.cfg.class_count} classes, cache has {len(names)}")
    res = fu.evaluate(model, sets["test"])
    fu.write_confusion_csv(res.confusion, out / "eval_confusion.csv", names)
    _write_rows(out / "eval.csv", ["variant", "test_accuracy", "test_loss"],
                [[model.cfg.variant, repr(res.accuracy), repr(float(res.loss))]])
    log.info("test accuracy %.4f", res.accuracy)


def cmd_ablate(cfg: RunConfig, out: Path, args) -> None:
    sets, names = _load_cache(cfg, out)
    base = cfg.model_config(len(names))
    rows = fu.run_ablation(sets, len(names), cfg.train_config(), base, cfg["ablation_variants"], log.info)
    fu.write_ablation_csv(rows, out / "ablation.csv")
    for r in rows:
        log.info("%-13s accuracy %.4f", r["variant"], r["accuracy"])


def _sample_index(args, n: int) -> int:
    i = 0 if args.sample is None else args.sample
    if not 0 <= i < n:
        raise UsageError(f"--sample {i} outside [0, {n})")
    return i


def cmd_export_tf(cfg: RunConfig, out: Path, args) -> None:
    sets, _ = _load_cache(cfg, out)
    split = cfg["export_split"]
    fs = sets[split]
    i = _sample_index(args, len(fs))
    for kind in ("astft", "dtcwt"):
        grid = TFGrid(np.asarray(getattr(fs, kind)[i], np.float64))
        stem = out / f"{kind}_{split}_{i}"
        write_pgm(grid, stem.with_suffix(".pgm"))
        write_grid_csv(grid, stem.with_suffix(".csv"))
    log.info("exported %s sample %d", split, i)


def cmd_pso_trace(cfg: RunConfig, out: Path, args) -> None:
    ds = load_dataset(_path(cfg, out, "dataset_file"))
    split = cfg["export_split"]
    sub = ds.splits()[split]
    i = _sample_index(args, len(sub))
    swarm = cfg.swarm()
    result = pso.pso_optimize(np.asarray(sub.v[i], np.float64), swarm)
    pso.write_trace_csv(result, out / f"pso_trace_{split}_{i}.csv")
    (out / f"pso_schedule_{split}_{i}.txt").write_text(
        f"{pso.schedule_text(result.best_schedule)}\n{result.best_fitness!r}\n")
    log.info("best fitness %.6f after %d evaluations", result.best_fitness, result.evaluations)


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "export-tf": cmd_export_tf,
    "pso-trace": cmd_pso_trace,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gearfuse", description="Gear fault diagnosis with fused time-frequency images.")
    p.add_argument("--print-defaults", action="store_true", help="print the documented default config and exit")
    sub = p.add_subparsers(dest="command")
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="key = value config file")
        s.add_argument("--seed", type=int, help="overrides the config seed")
        s.add_argument("--out", type=Path, default=Path("."), help="output directory")
        s.add_argument("--sample", type=int, help="sample index for export-tf and pso-trace")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
    return p


def _resolve_config(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.config is not None:
        return RunConfig.from_file(args.config, overrides)
    return RunConfig.build(overrides)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    if args.print_defaults:
        sys.stdout.write(defaults_text())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = _resolve_config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        _echo(cfg, args.out, args.command)
        COMMANDS[args.command](cfg, args.out, args)
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (ConfigError, UsageError, CheckpointError, ValueError, zipfile.BadZipFile) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
