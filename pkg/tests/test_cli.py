import csv
import json

import pytest

from awgan import cli

FAST = ["--iterations", "15", "--hidden", "8", "--batch-size", "16"]


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestHelp:
    def test_defaults_listed(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["train", "--help"])
        assert exc.value.code == 0
        text = " ".join(capsys.readouterr().out.split())
        for flag, default in (("--alpha1", "0.5"), ("--alpha2", "0.75"), ("--epsilon", "0.05"),
                              ("--delta", "0.05"), ("--d-lr", "0.001"), ("--mode", "aw-normalized")):
            assert flag in text
            assert f"(default: {default})" in text

    def test_every_key_has_a_flag(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["train", "--help"])
        text = capsys.readouterr().out
        for o in cli.OPTIONS:
            assert cli._flag(o) in text

    def test_no_command(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main([])
        assert exc.value.code == 2


class TestConfigFile:
    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["train", "--config", str(tmp_path / "nope.ini"), "--out-dir", str(tmp_path)], capsys)
        assert code == 2 and "not found" in err

    @pytest.mark.parametrize("body", ["[train]\nlearning_rate = 1\n", "[model]\nhidden = 4\n", "[aw]\nalpha1 = x\n"])
    def test_rejected(self, tmp_path, capsys, body):
        path = tmp_path / "bad.ini"
        path.write_text(body)
        code, _, err = run(["train", "--config", str(path), "--out-dir", str(tmp_path)], capsys)
        assert code == 2 and "usage error" in err

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[train]\nseed = 3\nhidden = 8\n[aw]\nalpha1 = 0.4\n")
        args = cli.build_parser().parse_args(["train", "--config", str(path), "--seed", "5"])
        values = cli.resolve_options(args)
        cfg = cli.build_train_config(values)
        assert (cfg.seed, cfg.hidden, cfg.aw.alpha1, cfg.aw.alpha2) == (5, 8, 0.4, 0.75)

    def test_invalid_combination(self, tmp_path, capsys):
        code, _, err = run(["train", "--alpha1", "0.9", "--alpha2", "0.6", "--out-dir", str(tmp_path)], capsys)
        assert code == 2

    def test_snapshot_round_trips(self, tmp_path, capsys):
        code, out, _ = run(["train", *FAST, "--seed", "4", "--out-dir", str(tmp_path)], capsys)
        assert code == 0
        snap = tmp_path / "train-ring8-aw-normalized-seed4" / "config.ini"
        args = cli.build_parser().parse_args(["train", "--config", str(snap)])
        cfg = cli.build_train_config(cli.resolve_options(args))
        assert cfg.seed == 4 and cfg.iterations == 15 and cfg.hidden == 8


class TestTrain:
    def test_artifacts(self, tmp_path, capsys):
        code, out, _ = run(["train", *FAST, "--seed", "7", "--out-dir", str(tmp_path)], capsys)
        assert code == 0 and "coverage=" in out
        d = tmp_path / "train-ring8-aw-normalized-seed7"
        for name in ("config.ini", "steps.csv", "generator.json", "discriminator.json", "summary.json"):
            assert (d / name).is_file()
        with (d / "steps.csv").open() as fh:
            assert len(list(csv.DictReader(fh))) == 15
        assert json.loads((d / "summary.json").read_text())["coverage"] <= 8

    def test_deterministic(self, tmp_path, capsys):
        blobs = []
        for name in ("a", "b"):
            run(["train", *FAST, "--seed", "7", "--out-dir", str(tmp_path / name)], capsys)
            d = tmp_path / name / "train-ring8-aw-normalized-seed7"
            blobs.append([(d / f).read_bytes() for f in ("steps.csv", "generator.json", "summary.json")])
        assert blobs[0] == blobs[1]

    def test_plain_equals_pinned(self, tmp_path, capsys):
        run(["train", *FAST, "--mode", "plain", "--out-dir", str(tmp_path)], capsys)
        run(["train", *FAST, "--mode", "aw-normalized", "--pin-weights", "1,1", "--out-dir", str(tmp_path)], capsys)
        a = (tmp_path / "train-ring8-plain-seed0" / "steps.csv").read_bytes()
        b = (tmp_path / "train-ring8-aw-normalized-pinned-seed0" / "steps.csv").read_bytes()
        assert a == b

    def test_env_output_root(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "envroot"))
        code, _, _ = run(["train", *FAST], capsys)
        assert code == 0
        assert (tmp_path / "envroot" / "train-ring8-aw-normalized-seed0" / "steps.csv").is_file()

    def test_unknown_task(self, tmp_path, capsys):
        code, _, _ = run(["train", "--task", "swissroll", "--out-dir", str(tmp_path)], capsys)
        assert code == 2

    def test_run_failure_exit_one(self, tmp_path, capsys, monkeypatch):
        def boom(cfg):
            raise RuntimeError("diverged")

        monkeypatch.setattr(cli, "train", boom)
        code, _, err = run(["train", *FAST, "--out-dir", str(tmp_path)], capsys)
        assert code == 1 and "diverged" in err


class TestVerify:
    def test_small_run(self, capsys):
        code, out, _ = run(["verify", "--dims", "2,10", "--pairs", "20"], capsys)
        lines = [l for l in out.splitlines() if l.startswith("[")]
        assert len(lines) == 6 and all(l.startswith("[PASS]") for l in lines)
        assert code == 0

    def test_epsilon_skips_geometry(self, capsys):
        code, out, _ = run(["verify", "--dims", "2", "--pairs", "5", "--epsilon", "0.05"], capsys)
        assert "[SKIP] geometry" in out
        assert code == 0

    def test_failure_exit(self, capsys, monkeypatch):
        from awgan import verify

        bad = verify.SuiteResult("fake", False, "forced")
        monkeypatch.setattr(verify, "run_all", lambda **kw: [bad])
        code, out, _ = run(["verify"], capsys)
        assert code == 1 and "[FAIL] fake" in out

    def test_bad_dims(self, capsys):
        code, _, _ = run(["verify", "--dims", "2,x"], capsys)
        assert code == 2


class TestDiagnose:
    def test_angles(self, tmp_path, capsys):
        code, out, _ = run(["diagnose", "angles", "--window", "0:12", *FAST[2:], "--out-dir", str(tmp_path)], capsys)
        assert code == 0 and "obtuse fraction" in out
        d = tmp_path / "diagnose-angles-aw-normalized-seed0"
        assert len((d / "angles.csv").read_text().splitlines()) == 13
        assert (d / "angles.svg").is_file()

    def test_scoregap(self, tmp_path, capsys):
        code, _, _ = run(["diagnose", "scoregap", "--steps-per-epoch", "5", *FAST[2:], "--out-dir", str(tmp_path)],
                         capsys)
        d = tmp_path / "diagnose-scoregap-aw-normalized-seed0"
        assert code == 0 and len((d / "scoregap.csv").read_text().splitlines()) == 6

    def test_modes(self, tmp_path, capsys):
        code, out, _ = run(["diagnose", "modes", "--iters", "10", "--checkpoint-every", "5", *FAST[2:],
                            "--out-dir", str(tmp_path)], capsys)
        assert code == 0 and "0:" in out and "10:" in out
        d = tmp_path / "diagnose-modes-aw-normalized-seed0"
        assert len((d / "modes.csv").read_text().splitlines()) == 4

    def test_unknown_study(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["diagnose", "spectra"])
        assert exc.value.code == 2

    @pytest.mark.parametrize("window", ["5", "a:b", "10:2"])
    def test_bad_window(self, tmp_path, capsys, window):
        code, _, _ = run(["diagnose", "angles", "--window", window, "--iters", "20", *FAST[2:],
                          "--out-dir", str(tmp_path)], capsys)
        assert code in (1, 2) and code != 0


class TestGrid:
    def test_single_cell(self, tmp_path, capsys):
        code, out, _ = run(["grid", "--alpha1", "0.5", "--alpha2", "0.75", "--iterations", "3", *FAST[2:],
                            "--out-dir", str(tmp_path)], capsys)
        assert code == 0 and "1 cells run" in out
        rows = (tmp_path / "grid-aw-normalized-seed0" / "grid.csv").read_text().splitlines()
        assert len(rows) == 2

    def test_invalid_cells_reported(self, tmp_path, capsys):
        code, out, _ = run(["grid", "--alpha1", "0.5,0.8", "--alpha2", "0.7", "--iterations", "2", *FAST[2:],
                            "--out-dir", str(tmp_path)], capsys)
        assert code == 0
        assert "alpha1=0.8 alpha2=0.7: invalid" in out and "1 cells run" in out

    def test_all_invalid(self, tmp_path, capsys):
        code, _, _ = run(["grid", "--alpha1", "0.9", "--alpha2", "0.6", "--out-dir", str(tmp_path)], capsys)
        assert code != 0

    def test_scalar_alpha_not_accepted(self, capsys):
        parser = cli.build_parser()
        args = parser.parse_args(["grid", "--alpha1", "0.4,0.5"])
        assert args.alpha1 == "0.4,0.5"
