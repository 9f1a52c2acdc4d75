import csv
import shutil

import numpy as np
import pytest

from gearfuse import cli, fusion
from gearfuse.config import DEFAULTS, ConfigError, RunConfig, parse_text
from gearfuse.signal import load_dataset
from gearfuse.tfa import read_pgm

TINY_CFG = """\
# small end-to-end run
per_class_count = 10
segment_length = 512
pso_swarm_size = 6
pso_max_iterations = 3
pso_repeats = 2
epochs = 1
batch_size = 8
"""

PIPELINE = ["synth", "preprocess", "train", "eval", "ablate", "export-tf", "pso-trace"]
TIMING_FILES = {"timing.csv"}


def run(cmd, out, cfg=None, *extra):
    argv = [cmd, "--out", str(out)]
    if cfg is not None:
        argv += ["--config", str(cfg)]
    return cli.main(argv + list(extra))


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def snapshot(out):
    files = {}
    for p in sorted(out.iterdir()):
        if p.name in TIMING_FILES:
            continue
        if p.name == "ablation.csv":
            files[p.name] = [r[:2] for r in read_rows(p)]     # drop wall-clock seconds
        else:
            files[p.name] = p.read_bytes()
    return files


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.cfg"
    cfg.write_text(TINY_CFG)
    out = root / "a"
    codes = [run(c, out, cfg, "--sample", "1") if c in ("export-tf", "pso-trace") else run(c, out, cfg)
             for c in PIPELINE]
    return cfg, out, codes


class TestPipeline:
    def test_all_commands_succeed(self, workdir):
        assert workdir[2] == [0] * len(PIPELINE)

    def test_outputs_present(self, workdir):
        _, out, _ = workdir
        for name in ("dataset.gfd", "features.npz", "schedule.txt", "model.gfnn", "curves.csv", "confusion.csv",
                     "metrics.csv", "eval.csv", "eval_confusion.csv", "ablation.csv", "astft_test_1.pgm",
                     "dtcwt_test_1.csv", "pso_trace_test_1.csv", "pso_schedule_test_1.txt"):
            assert (out / name).exists(), name

    def test_config_echo_reproduces(self, workdir):
        _, out, _ = workdir
        for cmd in PIPELINE:
            echo = out / f"config_{cmd}.txt"
            assert RunConfig.from_file(echo).to_text() == echo.read_text()
        assert "per_class_count = 10" in (out / "config_train.txt").read_text()

    def test_eval_reproduces_train_accuracy(self, workdir):
        _, out, _ = workdir
        train_acc = read_rows(out / "metrics.csv")[1][1]
        assert read_rows(out / "eval.csv")[1][1] == train_acc
        assert (out / "eval_confusion.csv").read_bytes() == (out / "confusion.csv").read_bytes()

    def test_ablation_rows(self, workdir):
        rows = read_rows(workdir[1] / "ablation.csv")
        assert rows[0] == ["variant", "accuracy", "seconds"]
        assert [r[0] for r in rows[1:]] == list(fusion.VARIANTS)

    def test_confusion_counts(self, workdir):
        rows = read_rows(workdir[1] / "confusion.csv")
        assert rows[0][1:] == ["healthy", "broken_tooth", "wear", "crack", "missing_tooth"]
        assert [sum(int(v) for v in r[1:]) for r in rows[1:]] == [2] * 5

    def test_schedule_file(self, workdir):
        lines = (workdir[1] / "schedule.txt").read_text().splitlines()
        assert lines[0].startswith("pooled,") and len(lines) == 6

    def test_cache_counts_and_range(self, workdir):
        sets, extra = fusion.load_features(workdir[1] / "features.npz")
        assert sum(len(s) for s in sets.values()) == 50
        for s in sets.values():
            assert s.astft.min() >= 0 and s.astft.max() <= 1 and s.dtcwt.min() >= 0 and s.dtcwt.max() <= 1
        assert list(extra["class_names"])[0] == "healthy"

    def test_pgm_export(self, workdir):
        _, out, _ = workdir
        blob = (out / "astft_test_1.pgm").read_bytes()
        assert blob.startswith(b"P5 32 32 255\n")
        assert (out / "dtcwt_test_1.pgm").read_bytes().startswith(b"P5 128 128 255\n")
        img = read_pgm(out / "dtcwt_test_1.pgm")
        assert img.min() == 0 and img.max() == 255

    def test_export_idempotent(self, workdir):
        cfg, out, _ = workdir
        before = (out / "astft_test_1.pgm").read_bytes(), (out / "astft_test_1.csv").read_bytes()
        assert run("export-tf", out, cfg, "--sample", "1") == 0
        assert ((out / "astft_test_1.pgm").read_bytes(), (out / "astft_test_1.csv").read_bytes()) == before

    def test_rerun_byte_identical(self, workdir, tmp_path):
        cfg, out, _ = workdir
        other = tmp_path / "b"
        for c in PIPELINE:
            extra = ("--sample", "1") if c in ("export-tf", "pso-trace") else ()
            assert run(c, other, cfg, *extra) == 0
        assert snapshot(other) == snapshot(out)

    def test_threads_do_not_change_cache(self, workdir, tmp_path, monkeypatch):
        cfg, out, _ = workdir
        shutil.copy(out / "dataset.gfd", tmp_path / "dataset.gfd")
        monkeypatch.setenv("GEARFUSE_THREADS", "4")
        assert run("preprocess", tmp_path, cfg) == 0
        assert (tmp_path / "features.npz").read_bytes() == (out / "features.npz").read_bytes()

    def test_seed_flag_changes_data(self, workdir, tmp_path):
        cfg, out, _ = workdir
        assert run("synth", tmp_path, cfg, "--seed", "5") == 0
        assert (tmp_path / "dataset.gfd").read_bytes() != (out / "dataset.gfd").read_bytes()
        assert "seed = 5" in (tmp_path / "config_synth.txt").read_text()


class TestSynthSizes:
    @pytest.mark.parametrize("classes, per_class, total", [("case1", 1000, 5000), ("case2", 800, 4800)])
    def test_case_sizes(self, tmp_path, classes, per_class, total):
        assert run("synth", tmp_path, None, "--set", f"classes={classes}",
                   "--set", f"per_class_count={per_class}") == 0
        ds = load_dataset(tmp_path / "dataset.gfd")
        assert len(ds.train) + len(ds.validation) + len(ds.test) == total
        assert ds.train.h.shape[1] == 1536

    def test_repeat_identical_bytes(self, tmp_path):
        args = ("--set", "per_class_count=20", "--set", "export_csv=true")
        assert run("synth", tmp_path / "x", None, *args) == 0
        assert run("synth", tmp_path / "y", None, *args) == 0
        for name in ("dataset.gfd", "dataset.csv"):
            assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


class TestExitCodes:
    def test_missing_cache_is_io_error(self, tmp_path):
        assert run("train", tmp_path) == cli.EXIT_IO
        assert run("eval", tmp_path) == cli.EXIT_IO

    def test_missing_dataset_is_io_error(self, tmp_path):
        assert run("preprocess", tmp_path) == cli.EXIT_IO

    def test_missing_config_file(self, tmp_path):
        assert run("synth", tmp_path, tmp_path / "nope.cfg") == cli.EXIT_IO

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("epochz = 3\n")
        assert run("synth", tmp_path, cfg) == cli.EXIT_INVALID
        assert run("synth", tmp_path, None, "--set", "bogus=1") == cli.EXIT_INVALID

    @pytest.mark.parametrize("override", ["epochs=0", "per_class_count=15", "classes=healthy,rusty",
                                          "variant=lstm", "pso_inertia=2", "segment_length=abc"])
    def test_invalid_values(self, tmp_path, override):
        assert run("synth", tmp_path, None, "--set", override) == cli.EXIT_INVALID

    def test_corrupt_cache(self, tmp_path):
        (tmp_path / "features.npz").write_bytes(b"not a zip")
        assert run("train", tmp_path) == cli.EXIT_INVALID

    def test_corrupt_checkpoint(self, workdir, tmp_path):
        _, out, _ = workdir
        shutil.copy(out / "features.npz", tmp_path / "features.npz")
        (tmp_path / "model.gfnn").write_bytes(b"XXXX" + bytes(16))
        assert run("eval", tmp_path) == cli.EXIT_INVALID

    def test_sample_out_of_range(self, workdir):
        cfg, out, _ = workdir
        assert run("export-tf", out, cfg, "--sample", "999") == cli.EXIT_INVALID

    def test_bad_thread_count(self, workdir, monkeypatch):
        cfg, out, _ = workdir
        monkeypatch.setenv("GEARFUSE_THREADS", "many")
        assert run("preprocess", out.parent / "threads", cfg) in (cli.EXIT_IO, cli.EXIT_INVALID)

    def test_argparse_errors(self):
        assert cli.main([]) == cli.EXIT_INVALID
        assert cli.main(["fly"]) == cli.EXIT_INVALID
        assert cli.main(["train", "--seed", "x"]) == cli.EXIT_INVALID

    def test_print_defaults(self, capsys):
        assert cli.main(["--print-defaults"]) == 0
        text = capsys.readouterr().out
        assert all(f"{k} = " in text for k in DEFAULTS)


class TestConfig:
    def test_comments_and_blanks(self):
        assert parse_text("# hi\n\nseed = 3  \n") == {"seed": "3"}

    def test_missing_equals(self):
        with pytest.raises(ConfigError):
            parse_text("seed 3\n")

    def test_defaults_documented(self):
        cfg = RunConfig.build({})
        assert all(desc for _, _, desc in DEFAULTS.values())
        assert cfg["epochs"] == 25 and cfg["learning_rate"] == 1e-4 and cfg["batch_size"] == 32

    def test_class_presets(self):
        assert len(RunConfig.build({"classes": "case2"}).class_names()) == 6
        assert RunConfig.build({"classes": "healthy,wear"}).class_names() == ("healthy", "wear")

    def test_round_trip(self):
        cfg = RunConfig.build({"seed": "4", "stage_channels": "4,8,8"})
        assert RunConfig.build(parse_text(cfg.to_text())).to_text() == cfg.to_text()

    def test_model_config(self):
        mc = RunConfig.build({"stage_channels": "4,8,8"}).model_config(5, "raw_H")
        assert mc.stage_channels == (4, 8, 8) and mc.variant == "raw_H" and mc.raw_length == 1536
        assert np.isclose(RunConfig.build({}).swarm(0).inertia, 0.729)
