"""End-to-end subcommand tests: exit codes, manifests, determinism."""

import numpy as np
import pytest

from fixture_corpus import ACCEPTED_NAMES, build_corpus
from lcenhance.autodiff import make_rng
from lcenhance.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main
from lcenhance.data import load_image, save_image


@pytest.fixture
def corpus(tmp_path):
    root = tmp_path / "corpus"
    build_corpus(root)
    return root


def run(*argv):
    return main([str(a) for a in argv])


class TestCurate:
    def test_six_pair_fixture(self, corpus, tmp_path, capsys):
        out = tmp_path / "out"
        assert run("--out", out, "curate", corpus) == EXIT_OK
        assert "6 patches, 2 accepted" in capsys.readouterr().out
        rows = (out / "manifest.tsv").read_text().strip().splitlines()[1:]
        assert len(rows) == 6
        accepted = [r.split("\t")[0] for r in rows if r.endswith("\t1")]
        assert sorted(accepted) == sorted(ACCEPTED_NAMES)
        # accepted + rejected == extracted
        rejected = [r for r in rows if r.endswith("\t0")]
        assert len(accepted) + len(rejected) == 6

    def test_boundary_brightness_passes(self, corpus, tmp_path):
        out = tmp_path / "out"
        run("--out", out, "curate", corpus)
        rows = (out / "manifest.tsv").read_text().strip().splitlines()[1:]
        boundary = next(r for r in rows if r.startswith("pair4_boundary"))
        cols = boundary.split("\t")
        assert float(cols[3]) == 10.0 and cols[4] == "1"

    def test_rerun_byte_identical(self, corpus, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run("--out", out1, "curate", corpus)
        run("--out", out2, "curate", corpus)
        assert (out1 / "manifest.tsv").read_bytes() == (out2 / "manifest.tsv").read_bytes()

    def test_missing_corpus_is_data_error(self, tmp_path):
        assert run("--out", tmp_path / "o", "curate", tmp_path / "nope") == EXIT_DATA

    def test_resolved_config_written_first(self, corpus, tmp_path):
        out = tmp_path / "out"
        run("--out", out, "--seed", 3, "curate", corpus, "--patch-size", 16)
        text = (out / "resolved_config.txt").read_text()
        assert "command = curate" in text
        assert "seed = 3" in text
        assert "patch_size = 16" in text


class TestConfigFile:
    def test_file_supplies_defaults_cli_overrides(self, corpus, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("patch_size = 16  # comment\nstride = 16\n")
        out = tmp_path / "out"
        assert run("--config", cfg, "--out", out, "curate", corpus,
                   "--patch-size", 32) == EXIT_OK
        text = (out / "resolved_config.txt").read_text()
        assert "patch_size = 32" in text  # flag wins
        assert "stride = 16" in text      # file fills the rest

    def test_unknown_key_is_usage_error(self, corpus, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("no_such_key = 5\n")
        assert run("--config", cfg, "--out", tmp_path / "o",
                   "curate", corpus) == EXIT_USAGE

    def test_malformed_line_is_usage_error(self, corpus, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("just a line without equals\n")
        assert run("--config", cfg, "--out", tmp_path / "o",
                   "curate", corpus) == EXIT_USAGE

    def test_missing_config_file_is_usage_error(self, corpus, tmp_path):
        assert run("--config", tmp_path / "absent.txt", "--out", tmp_path / "o",
                   "curate", corpus) == EXIT_USAGE

    def test_unparsable_value_is_usage_error(self, corpus, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("patch_size = banana\n")
        assert run("--config", cfg, "--out", tmp_path / "o",
                   "curate", corpus) == EXIT_USAGE


class TestTrain:
    def test_steps_zero_writes_init_checkpoint(self, tmp_path):
        out = tmp_path / "out"
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("base_width = 4\nstages = 1\nsteps = 0\n")
        assert run("--config", cfg, "--out", out, "--seed", 7,
                   "train", "--synthetic", 1) == EXIT_OK
        assert (out / "model.ckpt").exists()

    def test_synthetic_short_run(self, tmp_path):
        out = tmp_path / "out"
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("base_width = 4\nstages = 1\npatch = 8\n"
                       "val_interval = 0\ncheckpoint_interval = 0\n")
        assert run("--config", cfg, "--out", out, "train",
                   "--synthetic", 1, "--steps", 2) == EXIT_OK
        assert (out / "model.ckpt").exists()

    def test_no_source_is_usage_error(self, tmp_path):
        assert run("--out", tmp_path / "o", "train", "--steps", 1) == EXIT_USAGE

    def test_bad_resume_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"garbage")
        assert run("--out", tmp_path / "o", "train", "--synthetic", 1,
                   "--steps", 1, "--resume", bad) == EXIT_DATA

    def test_resume_continues(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("base_width = 4\nstages = 1\npatch = 8\n"
                       "val_interval = 0\ncheckpoint_interval = 0\n")
        out1 = tmp_path / "o1"
        run("--config", cfg, "--out", out1, "train", "--synthetic", 1,
            "--steps", 1)
        out2 = tmp_path / "o2"
        assert run("--config", cfg, "--out", out2, "train", "--synthetic", 1,
                   "--steps", 1, "--resume", out1 / "model.ckpt") == EXIT_OK


class TestEnhanceEval:
    @pytest.fixture
    def checkpoint(self, tmp_path):
        cfg = tmp_path / "traincfg.txt"
        cfg.write_text("base_width = 4\nstages = 1\nsteps = 0\n")
        out = tmp_path / "trained"
        run("--config", cfg, "--out", out, "--seed", 7, "train", "--synthetic", 1)
        return out / "model.ckpt"

    def test_enhance_writes_images(self, checkpoint, tmp_path):
        img_path = tmp_path / "input.ppm"
        save_image(make_rng(0).uniform(0, 1, (3, 8, 8)), img_path)
        out = tmp_path / "enh"
        assert run("--out", out, "enhance", checkpoint, img_path) == EXIT_OK
        result = load_image(out / "input_enhanced.ppm")
        assert result.shape == (3, 8, 8)
        assert result.min() >= 0.0 and result.max() <= 1.0

    def test_enhance_determinism(self, checkpoint, tmp_path):
        img_path = tmp_path / "input.ppm"
        save_image(make_rng(1).uniform(0, 1, (3, 8, 8)), img_path)
        outs = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            run("--out", out, "enhance", checkpoint, img_path)
            outs.append((out / "input_enhanced.ppm").read_bytes())
        assert outs[0] == outs[1]

    def test_enhance_corrupt_file_is_data_error(self, checkpoint, tmp_path):
        bad = tmp_path / "bad.ppm"
        bad.write_bytes(b"P6\n4 4\n255\n12")  # truncated body
        good = tmp_path / "good.ppm"
        save_image(make_rng(2).uniform(0, 1, (3, 8, 8)), good)
        out = tmp_path / "enh"
        assert run("--out", out, "enhance", checkpoint, good, bad) == EXIT_DATA
        # the good image was still processed
        assert (out / "good_enhanced.ppm").exists()

    def test_enhance_missing_checkpoint_is_data_error(self, tmp_path):
        assert run("--out", tmp_path / "o", "enhance",
                   tmp_path / "none.ckpt") == EXIT_DATA

    def test_eval_identity_perfect_on_identical_pairs(self, tmp_path):
        """low == ref, so the identity model scores the 100 dB cap and SSIM 1."""
        root = tmp_path / "corpus"
        (root / "low").mkdir(parents=True)
        (root / "ref").mkdir(parents=True)
        img = make_rng(3).uniform(0.2, 0.8, (3, 32, 32))
        save_image(img, root / "low" / "a.png")
        save_image(img, root / "ref" / "a.png")
        out = tmp_path / "ev"
        assert run("--out", out, "eval", "--identity", "--corpus", root) == EXIT_OK
        rows = (out / "eval.tsv").read_text().strip().splitlines()
        name, p, s = rows[1].split("\t")
        assert float(p) == 100.0 and float(s) == 1.0

    def test_eval_mean_footer(self, corpus, checkpoint, tmp_path):
        out = tmp_path / "ev"
        assert run("--out", out, "eval", "--checkpoint", checkpoint,
                   "--corpus", corpus) == EXIT_OK
        rows = [r.split("\t") for r in
                (out / "eval.tsv").read_text().strip().splitlines()]
        body = [r for r in rows[1:] if r[0] != "mean"]
        mean_row = rows[-1]
        assert mean_row[0] == "mean"
        assert float(mean_row[1]) == pytest.approx(
            np.mean([float(r[1]) for r in body]), abs=1e-5)

    def test_eval_no_accepted_pairs_is_data_error(self, tmp_path):
        root = tmp_path / "corpus"
        (root / "low").mkdir(parents=True)
        (root / "ref").mkdir(parents=True)
        dark = np.full((3, 32, 32), 5.0 / 255.0)
        save_image(dark, root / "low" / "a.png")
        save_image(dark, root / "ref" / "a.png")
        assert run("--out", tmp_path / "o", "eval", "--identity",
                   "--corpus", root) == EXIT_DATA


class TestGradcheck:
    def test_report_written_and_passes(self, tmp_path):
        out = tmp_path / "gc"
        assert run("--out", out, "gradcheck") == EXIT_OK
        rows = (out / "gradcheck.tsv").read_text().strip().splitlines()
        assert len(rows) == 8
        assert all(r.endswith("\tpass") for r in rows)


class TestUsage:
    def test_no_subcommand_is_usage_error(self):
        assert run() == EXIT_USAGE

    def test_unknown_subcommand_is_usage_error(self):
        assert run("frobnicate") == EXIT_USAGE
